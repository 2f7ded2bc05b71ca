#include "fan/image_io.hpp"

#include <cmath>
#include <fstream>

#include "fan/error.hpp"

namespace fan {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

struct PnmHeader {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::string& path, const char* expected_magic) {
    PnmHeader hd;
    hd.magic = next_token(in);
    if (hd.magic != expected_magic) {
        throw DataError(path + ": expected " + expected_magic + " header, found '" + hd.magic +
                        "'");
    }
    try {
        hd.w = std::stoi(next_token(in));
        hd.h = std::stoi(next_token(in));
        hd.maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw DataError(path + ": malformed header");
    }
    if (hd.w <= 0 || hd.h <= 0) throw DataError(path + ": non-positive image dims");
    if (hd.maxval != 255) throw DataError(path + ": only maxval 255 is supported");
    return hd;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    const PnmHeader hd = read_header(in, path, "P6");
    std::vector<unsigned char> raw(static_cast<size_t>(hd.w) * hd.h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
        throw DataError(path + ": truncated pixel data");
    }
    std::vector<double> data(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) data[i] = raw[i] / 255.0;
    return Tensor::from_data({hd.h, hd.w, 3}, std::move(data));
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw ShapeError("write_ppm: image must be [H x W x 3], got " + shape_str(image.shape()));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    std::vector<unsigned char> raw(image.vec().size());
    for (size_t i = 0; i < raw.size(); ++i) {
        double v = image.vec()[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("failed writing image file: " + path);
}

BinaryMask read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mask file: " + path);
    const PnmHeader hd = read_header(in, path, "P5");
    std::vector<unsigned char> raw(static_cast<size_t>(hd.w) * hd.h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
        throw DataError(path + ": truncated pixel data");
    }
    BinaryMask mask;
    mask.h = hd.h;
    mask.w = hd.w;
    mask.values.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) mask.values[i] = raw[i] != 0 ? 1 : 0;
    return mask;
}

void write_pgm(const std::string& path, const BinaryMask& mask) {
    if (static_cast<int64_t>(mask.values.size()) != static_cast<int64_t>(mask.h) * mask.w) {
        throw ShapeError("write_pgm: mask buffer does not match dims");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write mask file: " + path);
    out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
    std::vector<unsigned char> raw(mask.values.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = mask.values[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("failed writing mask file: " + path);
}

}  // namespace fan
