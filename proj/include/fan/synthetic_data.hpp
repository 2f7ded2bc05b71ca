#pragma once

#include <string>
#include <vector>

#include "fan/image_io.hpp"
#include "fan/rng.hpp"
#include "fan/tensor.hpp"
#include "fan/text_encoder.hpp"

namespace fan {

enum class ShapeKind { Circle, Square, Triangle };
enum class ColorKind { Red, Green, Blue, Yellow };

const char* shape_name(ShapeKind s);
const char* color_name(ColorKind c);

struct SceneObject {
    ShapeKind shape;
    ColorKind color;
    double cx = 0.0, cy = 0.0;  // pixel coordinates
    double size = 0.0;          // radius / half-extent
};

struct SceneSpec {
    int image_h = 0, image_w = 0;
    std::vector<SceneObject> objects;
    int referent = -1;
    uint64_t seed = 0;
};

struct GenerationConfig {
    int image_size = 64;
    int min_objects = 2, max_objects = 4;
    double min_size = 8.0, max_size = 14.0;
    int max_scene_retries = 64;
    int max_place_retries = 64;
    int max_len = 17;
};

struct ImageSample {
    std::string id;
    Tensor image;  // [H x W x 3], values on the 8-bit lattice k/255
    TokenSequence tokens;
    BinaryMask gt_mask;
    std::string expression;
    SceneSpec scene;  // populated by the generator; not persisted
};

// The closed vocabulary every generated expression draws from.
Vocabulary dataset_vocabulary();

// Hard-edged coverage set of one object at pixel centers.
BinaryMask rasterize_object(const SceneObject& obj, int h, int w);

// Fully deterministic in `seed`. The expression uniquely identifies the
// referent: attribute-only when (color, shape) is unique in the scene,
// otherwise a spatial relation against an unambiguous anchor object.
ImageSample generate_sample(uint64_t seed, const GenerationConfig& cfg, const Vocabulary& vocab);

// ---- persistence ----
// Layout: <dir>/vocab.txt plus per split <dir>/<split>/manifest.jsonl,
// images/<id>.ppm, masks/<id>.pgm.
void write_split(const std::string& dataset_dir, const std::string& split,
                 const std::vector<ImageSample>& samples);
std::vector<ImageSample> read_split(const std::string& dataset_dir, const std::string& split);
Vocabulary load_dataset_vocab(const std::string& dataset_dir);

// Generates vocab + train/val/test splits with disjoint seed ranges.
void generate_dataset(const std::string& out_dir, int train_n, int val_n, int test_n,
                      int image_size, uint64_t seed);

}  // namespace fan
