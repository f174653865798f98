#pragma once

// 8-bit image IO: PNG (grayscale/RGB/RGBA sources, RGB in memory) and binary
// PPM. Decoding verifies structure and checksums; encoding writes RGB PNG
// with filter 0 rows and a bit-exact decode(encode(x)) round trip.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsit {

class ImageIOError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// row-major, tightly packed RGB
struct ImageU8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }
};

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const ImageU8& image);

ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);

// dispatches on the file's magic bytes (PNG signature or "P6")
ImageU8 read_image(const std::string& path);
// chooses the codec from the file extension (.png or .ppm)
void write_image(const std::string& path, const ImageU8& image);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace tsit
