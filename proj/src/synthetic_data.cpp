#include "fan/synthetic_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fan/error.hpp"

namespace fan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSplitSeedStride = 1'000'000;

struct Rgb {
    int r, g, b;
};

Rgb color_rgb(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return {220, 40, 40};
        case ColorKind::Green: return {40, 180, 70};
        case ColorKind::Blue: return {60, 90, 220};
        case ColorKind::Yellow: return {235, 220, 60};
    }
    return {0, 0, 0};
}

constexpr int kBackgroundGray = 128;

double bounding_radius(const SceneObject& o) {
    // squares and triangles reach their corners at size*sqrt(2)
    return o.shape == ShapeKind::Circle ? o.size : o.size * 1.41421356237 + 1e-9;
}

bool covers(const SceneObject& o, double px, double py) {
    const double dx = px - o.cx;
    const double dy = py - o.cy;
    switch (o.shape) {
        case ShapeKind::Circle:
            return dx * dx + dy * dy <= o.size * o.size;
        case ShapeKind::Square:
            return std::fabs(dx) <= o.size && std::fabs(dy) <= o.size;
        case ShapeKind::Triangle: {
            // vertices: top (cx, cy-s), bottom-left (cx-s, cy+s), bottom-right (cx+s, cy+s)
            const double ax = o.cx, ay = o.cy - o.size;
            const double bx = o.cx - o.size, by = o.cy + o.size;
            const double cx2 = o.cx + o.size, cy2 = o.cy + o.size;
            auto edge = [&](double x0, double y0, double x1, double y1) {
                return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
            };
            const double e0 = edge(ax, ay, bx, by);
            const double e1 = edge(bx, by, cx2, cy2);
            const double e2 = edge(cx2, cy2, ax, ay);
            return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
        }
    }
    return false;
}

bool same_kind(const SceneObject& a, const SceneObject& b) {
    return a.shape == b.shape && a.color == b.color;
}

// Objects whose (color, shape) pair appears exactly once in the scene.
bool kind_unique(const std::vector<SceneObject>& objects, int idx) {
    int count = 0;
    for (const auto& o : objects) {
        if (same_kind(o, objects[static_cast<size_t>(idx)])) ++count;
    }
    return count == 1;
}

struct Relation {
    const char* phrase;  // inserted between the two noun phrases
    // axis value of candidate vs anchor: candidate must be strictly on the
    // named side with at least `margin` separation
    bool (*holds)(const SceneObject& cand, const SceneObject& anchor);
    double (*separation)(const SceneObject& cand, const SceneObject& anchor);
};

const Relation kRelations[] = {
    {"left of", [](const SceneObject& c, const SceneObject& a) { return c.cx < a.cx; },
     [](const SceneObject& c, const SceneObject& a) { return std::fabs(c.cx - a.cx); }},
    {"right of", [](const SceneObject& c, const SceneObject& a) { return c.cx > a.cx; },
     [](const SceneObject& c, const SceneObject& a) { return std::fabs(c.cx - a.cx); }},
    {"above", [](const SceneObject& c, const SceneObject& a) { return c.cy < a.cy; },
     [](const SceneObject& c, const SceneObject& a) { return std::fabs(c.cy - a.cy); }},
    {"below", [](const SceneObject& c, const SceneObject& a) { return c.cy > a.cy; },
     [](const SceneObject& c, const SceneObject& a) { return std::fabs(c.cy - a.cy); }},
};

constexpr double kRelationMargin = 2.0;

std::string noun_phrase(const SceneObject& o) {
    return std::string("the ") + color_name(o.color) + " " + shape_name(o.shape);
}

// Returns "" when no unambiguous expression exists for this referent.
std::string build_expression(const std::vector<SceneObject>& objects, int referent, Rng& rng) {
    const SceneObject& ref = objects[static_cast<size_t>(referent)];
    if (kind_unique(objects, referent)) return noun_phrase(ref);

    // need a relation against an anchor that is itself unambiguous
    std::vector<int> anchors;
    for (int j = 0; j < static_cast<int>(objects.size()); ++j) {
        if (j == referent) continue;
        if (same_kind(objects[static_cast<size_t>(j)], ref)) continue;
        if (kind_unique(objects, j)) anchors.push_back(j);
    }
    rng.shuffle(anchors);
    std::vector<int> rel_order = {0, 1, 2, 3};
    rng.shuffle(rel_order);

    for (int aj : anchors) {
        const SceneObject& anchor = objects[static_cast<size_t>(aj)];
        for (int ri : rel_order) {
            const Relation& rel = kRelations[static_cast<size_t>(ri)];
            // every same-kind candidate must be decisively on one side
            bool decisive = true;
            int satisfying = 0;
            bool referent_satisfies = false;
            for (int c = 0; c < static_cast<int>(objects.size()); ++c) {
                const SceneObject& cand = objects[static_cast<size_t>(c)];
                if (!same_kind(cand, ref)) continue;
                if (rel.separation(cand, anchor) < kRelationMargin) {
                    decisive = false;
                    break;
                }
                if (rel.holds(cand, anchor)) {
                    ++satisfying;
                    if (c == referent) referent_satisfies = true;
                }
            }
            if (decisive && satisfying == 1 && referent_satisfies) {
                return noun_phrase(ref) + " " + rel.phrase + " " + noun_phrase(anchor);
            }
        }
    }
    return "";
}

Tensor render_scene(const SceneSpec& scene) {
    const int h = scene.image_h, w = scene.image_w;
    std::vector<double> img(static_cast<size_t>(h) * w * 3, kBackgroundGray / 255.0);
    for (const auto& obj : scene.objects) {
        const Rgb rgb = color_rgb(obj.color);
        const double cr = rgb.r / 255.0, cg = rgb.g / 255.0, cb = rgb.b / 255.0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!covers(obj, x + 0.5, y + 0.5)) continue;
                const size_t base = (static_cast<size_t>(y) * w + x) * 3;
                img[base] = cr;
                img[base + 1] = cg;
                img[base + 2] = cb;
            }
        }
    }
    return Tensor::from_data({h, w, 3}, std::move(img));
}

std::string sample_id(uint64_t seed) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%09llu", static_cast<unsigned long long>(seed));
    return buf;
}

}  // namespace

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
    }
    return "?";
}

const char* color_name(ColorKind c) {
    switch (c) {
        case ColorKind::Red: return "red";
        case ColorKind::Green: return "green";
        case ColorKind::Blue: return "blue";
        case ColorKind::Yellow: return "yellow";
    }
    return "?";
}

Vocabulary dataset_vocabulary() {
    return Vocabulary::from_words({"the", "red", "green", "blue", "yellow", "circle", "square",
                                   "triangle", "left", "right", "of", "above", "below"});
}

BinaryMask rasterize_object(const SceneObject& obj, int h, int w) {
    BinaryMask mask;
    mask.h = h;
    mask.w = w;
    mask.values.assign(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (covers(obj, x + 0.5, y + 0.5)) mask.values[static_cast<size_t>(y) * w + x] = 1;
        }
    }
    return mask;
}

ImageSample generate_sample(uint64_t seed, const GenerationConfig& cfg, const Vocabulary& vocab) {
    if (cfg.image_size % 32 != 0 || cfg.image_size <= 0) {
        throw ConfigError("generation: image_size must be a positive multiple of 32");
    }
    if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
        throw ConfigError("generation: invalid object count range");
    }

    for (int scene_try = 0; scene_try < cfg.max_scene_retries; ++scene_try) {
        Rng rng = Rng(seed).stream("scene").stream(static_cast<uint64_t>(scene_try));
        SceneSpec scene;
        scene.image_h = scene.image_w = cfg.image_size;
        scene.seed = seed;

        const int count =
            cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
        bool placed_all = true;
        for (int i = 0; i < count && placed_all; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < cfg.max_place_retries; ++attempt) {
                SceneObject obj;
                obj.shape = static_cast<ShapeKind>(rng.uniform_int(3));
                obj.color = static_cast<ColorKind>(rng.uniform_int(4));
                obj.size = rng.uniform(cfg.min_size, cfg.max_size);
                const double margin = bounding_radius(obj) + 1.0;
                if (2.0 * margin >= cfg.image_size) continue;
                obj.cx = rng.uniform(margin, cfg.image_size - margin);
                obj.cy = rng.uniform(margin, cfg.image_size - margin);

                bool overlaps = false;
                for (const auto& other : scene.objects) {
                    const double dx = obj.cx - other.cx;
                    const double dy = obj.cy - other.cy;
                    const double min_dist = bounding_radius(obj) + bounding_radius(other) + 2.0;
                    if (dx * dx + dy * dy < min_dist * min_dist) {
                        overlaps = true;
                        break;
                    }
                }
                if (!overlaps) {
                    scene.objects.push_back(obj);
                    placed = true;
                    break;
                }
            }
            placed_all = placed;
        }
        if (!placed_all) continue;

        scene.referent = rng.uniform_int(count);
        const std::string expr = build_expression(scene.objects, scene.referent, rng);
        if (expr.empty()) continue;

        ImageSample sample;
        sample.id = sample_id(seed);
        sample.scene = scene;
        sample.expression = expr;
        sample.image = render_scene(scene);
        sample.gt_mask = rasterize_object(scene.objects[static_cast<size_t>(scene.referent)],
                                          cfg.image_size, cfg.image_size);
        sample.tokens = tokenize(expr, vocab, cfg.max_len);
        return sample;
    }
    throw GenerationError("could not build a scene with an unambiguous expression for seed " +
                          std::to_string(seed) + " after " +
                          std::to_string(cfg.max_scene_retries) + " retries");
}

void write_split(const std::string& dataset_dir, const std::string& split,
                 const std::vector<ImageSample>& samples) {
    const fs::path root = fs::path(dataset_dir) / split;
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (ec) throw IoError("cannot create dataset directories under " + root.string());

    std::ofstream manifest(root / "manifest.jsonl");
    if (!manifest) throw IoError("cannot write manifest in " + root.string());
    for (const auto& s : samples) {
        const std::string image_rel = "images/" + s.id + ".ppm";
        const std::string mask_rel = "masks/" + s.id + ".pgm";
        write_ppm((root / image_rel).string(), s.image);
        write_pgm((root / mask_rel).string(), s.gt_mask);
        json rec = {{"id", s.id},
                    {"image", image_rel},
                    {"mask", mask_rel},
                    {"expression", s.expression},
                    {"tokens", s.tokens.ids}};
        manifest << rec.dump() << "\n";
    }
    if (!manifest) throw IoError("failed writing manifest in " + root.string());
}

std::vector<ImageSample> read_split(const std::string& dataset_dir, const std::string& split) {
    const fs::path root = fs::path(dataset_dir) / split;
    const fs::path manifest_path = root / "manifest.jsonl";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw DataError("missing manifest: " + manifest_path.string());

    std::vector<ImageSample> samples;
    std::string line;
    int line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": malformed record: " + e.what());
        }
        ImageSample s;
        try {
            s.id = rec.at("id").get<std::string>();
            s.expression = rec.at("expression").get<std::string>();
            s.tokens.ids = rec.at("tokens").get<std::vector<int>>();
            const std::string image_rel = rec.at("image").get<std::string>();
            const std::string mask_rel = rec.at("mask").get<std::string>();
            const fs::path image_path = root / image_rel;
            const fs::path mask_path = root / mask_rel;
            if (!fs::exists(image_path)) {
                throw DataError("manifest references missing image file: " + image_path.string());
            }
            if (!fs::exists(mask_path)) {
                throw DataError("manifest references missing mask file: " + mask_path.string());
            }
            s.image = read_ppm(image_path.string());
            s.gt_mask = read_pgm(mask_path.string());
        } catch (const json::exception& e) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": incomplete record: " + e.what());
        }
        // reconstruct true_length from the stored ids
        int eos = -1;
        for (size_t i = 0; i < s.tokens.ids.size(); ++i) {
            if (s.tokens.ids[i] == Vocabulary::kEos) {
                eos = static_cast<int>(i);
                break;
            }
        }
        if (eos < 0) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": token sequence has no [EOS]");
        }
        s.tokens.true_length = eos + 1;
        if (s.gt_mask.h != s.image.dim(0) || s.gt_mask.w != s.image.dim(1)) {
            throw DataError("sample " + s.id + ": mask dims do not match image dims");
        }
        samples.push_back(std::move(s));
    }
    // splits are homogeneous in image size
    for (const auto& s : samples) {
        if (s.image.dim(0) != samples[0].image.dim(0) ||
            s.image.dim(1) != samples[0].image.dim(1)) {
            throw DataError("mixed image sizes in split '" + split + "': sample " + s.id +
                            " is " + shape_str(s.image.shape()) + " but sample " +
                            samples[0].id + " is " + shape_str(samples[0].image.shape()));
        }
    }
    return samples;
}

Vocabulary load_dataset_vocab(const std::string& dataset_dir) {
    return Vocabulary::load((fs::path(dataset_dir) / "vocab.txt").string());
}

void generate_dataset(const std::string& out_dir, int train_n, int val_n, int test_n,
                      int image_size, uint64_t seed) {
    if (train_n < 0 || val_n < 0 || test_n < 0) {
        throw ConfigError("split sizes must be non-negative");
    }
    if (train_n > kSplitSeedStride || val_n > kSplitSeedStride || test_n > kSplitSeedStride) {
        throw ConfigError("split sizes above " + std::to_string(kSplitSeedStride) +
                          " are not supported");
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir);

    Vocabulary vocab = dataset_vocabulary();
    vocab.save((fs::path(out_dir) / "vocab.txt").string());

    GenerationConfig cfg;
    cfg.image_size = image_size;
    cfg.min_size = image_size / 8.0;
    cfg.max_size = image_size * 0.22;

    struct SplitPlan {
        const char* name;
        int count;
        uint64_t offset;
    };
    const SplitPlan plans[] = {{"train", train_n, 0},
                               {"val", val_n, kSplitSeedStride},
                               {"test", test_n, 2 * kSplitSeedStride}};
    for (const auto& plan : plans) {
        std::vector<ImageSample> samples;
        samples.reserve(static_cast<size_t>(plan.count));
        for (int i = 0; i < plan.count; ++i) {
            samples.push_back(
                generate_sample(seed + plan.offset + static_cast<uint64_t>(i), cfg, vocab));
        }
        write_split(out_dir, plan.name, samples);
    }
}

}  // namespace fan
