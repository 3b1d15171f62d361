#include "hmseg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace hmseg::io {

namespace {

struct PngImage {
    png_image img{};
    PngImage() {
        img.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
};

Raster<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int channels) {
    PngImage png;
    if (png_image_begin_read_from_file(&png.img, path.c_str()) == 0) {
        throw IoError("cannot read PNG '" + path.string() + "': " + png.img.message);
    }
    png.img.format = format;
    Raster<std::uint8_t> out(static_cast<int>(png.img.height), static_cast<int>(png.img.width), channels);
    if (png_image_finish_read(&png.img, nullptr, out.data.data(), 0, nullptr) == 0) {
        throw IoError("cannot decode PNG '" + path.string() + "': " + png.img.message);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Raster<std::uint8_t>& r, png_uint_32 format) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    PngImage png;
    png.img.width = static_cast<png_uint_32>(r.width);
    png.img.height = static_cast<png_uint_32>(r.height);
    png.img.format = format;
    if (png_image_write_to_file(&png.img, path.c_str(), 0, r.data.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG '" + path.string() + "': " + png.img.message);
    }
}

}  // namespace

Image read_rgb(const std::filesystem::path& path) { return read_png(path, PNG_FORMAT_RGB, 3); }

void write_rgb(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 3) {
        throw DimensionError("write_rgb expects 3 channels");
    }
    write_png(path, img, PNG_FORMAT_RGB);
}

LabelRaster read_labels(const std::filesystem::path& path) {
    LabelRaster out;
    out.data = read_png(path, PNG_FORMAT_GRAY, 1);
    out.validate();
    return out;
}

void write_labels(const std::filesystem::path& path, const LabelRaster& labels) {
    write_png(path, labels.data, PNG_FORMAT_GRAY);
}

Georef read_world_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open world file '" + path.string() + "'");
    }
    // A D B E C F; C/F locate the center of the upper-left pixel.
    std::array<double, 6> v{};
    for (int i = 0; i < 6; ++i) {
        if (!(in >> v[i])) {
            throw SchemaError(path.string() + ": line " + std::to_string(i + 1) + ": expected a number");
        }
    }
    const double a = v[0], d = v[1], b = v[2], e = v[3], cx = v[4], fy = v[5];
    Georef g{{cx - 0.5 * a - 0.5 * b, a, b, fy - 0.5 * d - 0.5 * e, d, e}};
    if (!g.invertible()) {
        throw SchemaError(path.string() + ": affine transform is not invertible");
    }
    return g;
}

void write_world_file(const std::filesystem::path& path, const Georef& g) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write world file '" + path.string() + "'");
    }
    const auto& c = g.c;
    const Point2 center = g.to_world(0.5, 0.5);
    out << std::setprecision(17) << c[1] << '\n'
        << c[4] << '\n'
        << c[2] << '\n'
        << c[5] << '\n'
        << center.x << '\n'
        << center.y << '\n';
}

}  // namespace hmseg::io
