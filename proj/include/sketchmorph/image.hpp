#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "sketchmorph/geometry.hpp"

namespace sketchmorph {

/// Row-major grayscale raster. Intensities live in [0, 1]; 1 is white.
///
/// Image coordinates put the centre of pixel (col, row) at (col, row).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 1.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
        if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    }

    [[nodiscard]] double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] double clamped(int x, int y) const {
        return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
    }
    [[nodiscard]] bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    /// Bilinear sample with replicate padding.
    [[nodiscard]] double sample(Vec2 p) const {
        const double fx = std::clamp(p.x, 0.0, static_cast<double>(width - 1));
        const double fy = std::clamp(p.y, 0.0, static_cast<double>(height - 1));
        const int x0 = std::min(static_cast<int>(fx), width - 1);
        const int y0 = std::min(static_cast<int>(fy), height - 1);
        const int x1 = std::min(x0 + 1, width - 1);
        const int y1 = std::min(y0 + 1, height - 1);
        const double tx = fx - x0;
        const double ty = fy - y0;
        const double top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
        const double bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
        return top * (1.0 - ty) + bottom * ty;
    }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Row-major bit raster; true is ink / foreground.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryImage() = default;
    BinaryImage(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0) {
        if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    }

    [[nodiscard]] bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    /// Out-of-bounds reads as background.
    [[nodiscard]] bool get(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height && at(x, y); }
    [[nodiscard]] std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }

    friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

inline GrayImage to_gray(const BinaryImage& img) {
    GrayImage out(img.width, img.height, 1.0);
    for (std::size_t i = 0; i < img.bits.size(); ++i) out.pixels[i] = img.bits[i] ? 0.0 : 1.0;
    return out;
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// The image as it would read back from an 8-bit file.
inline GrayImage quantized(GrayImage img) {
    for (double& v : img.pixels) v = quantize(v) / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// PGM

inline std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) out.push_back(static_cast<char>(quantize(v)));
    return out;
}

inline GrayImage decode_pgm(const std::string& data) {
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
        if (start == pos) throw Error("truncated PGM header");
        return data.substr(start, pos - start);
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2") throw Error("not a PGM image (magic '" + magic + "')");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::logic_error&) {
        throw Error("malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw Error("unsupported PGM header");
    GrayImage img(w, h);
    const std::size_t n = img.pixels.size();
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            img.pixels[i] = std::clamp(std::stod(next_token()) / maxval, 0.0, 1.0);
        }
        return img;
    }
    ++pos;  // single whitespace after maxval
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    if (data.size() < pos + n * bytes) throw Error("truncated PGM pixel data");
    for (std::size_t i = 0; i < n; ++i) {
        unsigned v = static_cast<unsigned char>(data[pos + i * bytes]);
        if (bytes == 2) v = (v << 8) | static_cast<unsigned char>(data[pos + i * bytes + 1]);
        img.pixels[i] = std::clamp(static_cast<double>(v) / maxval, 0.0, 1.0);
    }
    return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit gray through libpng's simplified API)

inline std::string encode_png(const GrayImage& img) {
    std::vector<std::uint8_t> raw(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), raw.begin(), quantize);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, raw.data(), 0, nullptr)) {
        throw Error(std::string("png encode failed: ") + image.message);
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, raw.data(), 0, nullptr)) {
        throw Error(std::string("png encode failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

inline GrayImage decode_png(const std::string& data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
        throw Error(std::string("png decode failed: ") + image.message);
    }
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error(std::string("png decode failed: ") + image.message);
    }
    GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

/// Sniffs PNG vs PGM from the leading bytes.
inline GrayImage decode_image(const std::string& bytes) {
    if (bytes.size() >= 8 && bytes.compare(0, 4, "\x89PNG") == 0) return decode_png(bytes);
    return decode_pgm(bytes);
}

inline GrayImage load_image(const std::filesystem::path& path) {
    try {
        return decode_image(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

/// Writes PNG when the extension is `.png`, PGM otherwise.
inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
    write_file(path, path.extension() == ".png" ? encode_png(img) : encode_pgm(img));
}

}  // namespace sketchmorph
