#include "tsit/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <memory>

namespace tsit {

namespace {

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[5],
                  const std::vector<std::uint8_t>& data) {
    put_be32(out, std::uint32_t(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = ::crc32(0, out.data() + crc_start, uInt(4 + data.size()));
    put_be32(out, std::uint32_t(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

// undo PNG row filters in place over raw scanlines (filter byte + row data)
std::vector<std::uint8_t> unfilter(const std::vector<std::uint8_t>& raw, std::size_t height,
                                   std::size_t row_bytes, std::size_t bpp) {
    std::vector<std::uint8_t> img(height * row_bytes);
    for (std::size_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (row_bytes + 1)];
        const std::uint8_t* src = raw.data() + y * (row_bytes + 1) + 1;
        std::uint8_t* dst = img.data() + y * row_bytes;
        const std::uint8_t* up = y > 0 ? img.data() + (y - 1) * row_bytes : nullptr;
        switch (filter) {
            case 0:
                std::memcpy(dst, src, row_bytes);
                break;
            case 1:  // Sub
                for (std::size_t i = 0; i < row_bytes; ++i)
                    dst[i] = std::uint8_t(src[i] + (i >= bpp ? dst[i - bpp] : 0));
                break;
            case 2:  // Up
                for (std::size_t i = 0; i < row_bytes; ++i)
                    dst[i] = std::uint8_t(src[i] + (up ? up[i] : 0));
                break;
            case 3:  // Average
                for (std::size_t i = 0; i < row_bytes; ++i) {
                    const int a = i >= bpp ? dst[i - bpp] : 0;
                    const int b = up ? up[i] : 0;
                    dst[i] = std::uint8_t(src[i] + ((a + b) >> 1));
                }
                break;
            case 4:  // Paeth
                for (std::size_t i = 0; i < row_bytes; ++i) {
                    const int a = i >= bpp ? dst[i - bpp] : 0;
                    const int b = up ? up[i] : 0;
                    const int c = (up && i >= bpp) ? up[i - bpp] : 0;
                    dst[i] = std::uint8_t(src[i] + paeth(a, b, c));
                }
                break;
            default:
                throw ImageIOError("PNG: unknown row filter " + std::to_string(filter));
        }
    }
    return img;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw ImageIOError("PNG: bad signature");

    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;

    std::size_t pos = 8;
    while (pos < bytes.size()) {
        if (pos + 8 > bytes.size()) throw ImageIOError("PNG: truncated chunk header");
        const std::uint32_t len = be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw ImageIOError("PNG: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        const std::uint32_t want_crc = be32(bytes.data() + pos + 8 + len);
        const auto got_crc = ::crc32(0, bytes.data() + pos + 4, uInt(4 + len));
        if (std::uint32_t(got_crc) != want_crc)
            throw ImageIOError("PNG: checksum mismatch in chunk " + std::string(type, 4));

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ImageIOError("PNG: malformed IHDR");
            width = be32(data);
            height = be32(data + 4);
            const std::uint8_t depth = data[8], color = data[9], comp = data[10],
                               filter = data[11], interlace = data[12];
            if (width == 0 || height == 0) throw ImageIOError("PNG: zero extent");
            if (depth != 8) throw ImageIOError("PNG: only 8-bit depth is supported");
            if (color == 0)
                channels = 1;
            else if (color == 2)
                channels = 3;
            else if (color == 6)
                channels = 4;
            else
                throw ImageIOError("PNG: unsupported color type " + std::to_string(color));
            if (comp != 0 || filter != 0) throw ImageIOError("PNG: nonstandard compression");
            if (interlace != 0) throw ImageIOError("PNG: interlaced images are not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr) throw ImageIOError("PNG: missing IHDR");
    if (!saw_iend) throw ImageIOError("PNG: missing IEND");
    if (idat.empty()) throw ImageIOError("PNG: missing IDAT");

    const std::size_t row_bytes = width * channels;
    std::vector<std::uint8_t> raw((row_bytes + 1) * height);
    uLongf raw_len = uLongf(raw.size());
    const int zrc = ::uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size())
        throw ImageIOError("PNG: pixel data does not inflate to the expected size");

    const auto flat = unfilter(raw, height, row_bytes, channels);

    ImageU8 img;
    img.width = width;
    img.height = height;
    img.pixels.resize(width * height * 3);
    for (std::size_t i = 0; i < width * height; ++i) {
        const std::uint8_t* p = flat.data() + i * channels;
        if (channels == 1) {
            img.pixels[i * 3 + 0] = img.pixels[i * 3 + 1] = img.pixels[i * 3 + 2] = p[0];
        } else {  // 3 or 4: alpha is dropped
            img.pixels[i * 3 + 0] = p[0];
            img.pixels[i * 3 + 1] = p[1];
            img.pixels[i * 3 + 2] = p[2];
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageU8& image) {
    if (image.width == 0 || image.height == 0 ||
        image.pixels.size() != image.width * image.height * 3)
        throw ImageIOError("PNG encode: malformed image buffer");

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);

    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, std::uint32_t(image.width));
    put_be32(ihdr, std::uint32_t(image.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);

    const std::size_t row_bytes = image.width * 3;
    std::vector<std::uint8_t> raw((row_bytes + 1) * image.height);
    for (std::size_t y = 0; y < image.height; ++y) {
        raw[y * (row_bytes + 1)] = 0;  // filter 0
        std::memcpy(raw.data() + y * (row_bytes + 1) + 1,
                    image.pixels.data() + y * row_bytes, row_bytes);
    }
    std::vector<std::uint8_t> compressed(::compressBound(uLong(raw.size())));
    uLongf comp_len = uLongf(compressed.size());
    if (::compress2(compressed.data(), &comp_len, raw.data(), uLong(raw.size()),
                    Z_DEFAULT_COMPRESSION) != Z_OK)
        throw ImageIOError("PNG encode: deflate failed");
    compressed.resize(comp_len);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});
    return out;
}

namespace {

// PPM token reader skipping whitespace and '#' comments
std::size_t ppm_token(const std::vector<std::uint8_t>& b, std::size_t pos, std::string& tok) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    tok.clear();
    while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(char(b[pos++]));
    if (tok.empty()) throw ImageIOError("PPM: truncated header");
    return pos;
}

}  // namespace

ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes) {
    std::string tok;
    std::size_t pos = ppm_token(bytes, 0, tok);
    if (tok != "P6") throw ImageIOError("PPM: not a binary P6 file");
    pos = ppm_token(bytes, pos, tok);
    const long w = std::atol(tok.c_str());
    pos = ppm_token(bytes, pos, tok);
    const long h = std::atol(tok.c_str());
    pos = ppm_token(bytes, pos, tok);
    const long maxval = std::atol(tok.c_str());
    if (w <= 0 || h <= 0) throw ImageIOError("PPM: bad extent");
    if (maxval != 255) throw ImageIOError("PPM: only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw ImageIOError("PPM: malformed header");
    ++pos;  // single whitespace after maxval
    ImageU8 img;
    img.width = std::size_t(w);
    img.height = std::size_t(h);
    const std::size_t need = img.width * img.height * 3;
    if (bytes.size() - pos < need) throw ImageIOError("PPM: truncated pixel data");
    img.pixels.assign(bytes.begin() + long(pos), bytes.begin() + long(pos + need));
    return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
    if (image.width == 0 || image.height == 0 ||
        image.pixels.size() != image.width * image.height * 3)
        throw ImageIOError("PPM encode: malformed image buffer");
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P6\n%zu %zu\n255\n", image.width,
                                image.height);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ImageIOError("cannot open '" + path + "' for reading");
    std::fseek(f.get(), 0, SEEK_END);
    const long size = std::ftell(f.get());
    if (size < 0) throw ImageIOError("cannot stat '" + path + "'");
    std::fseek(f.get(), 0, SEEK_SET);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ImageIOError("short read on '" + path + "'");
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ImageIOError("cannot open '" + path + "' for writing");
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ImageIOError("short write on '" + path + "'");
}

ImageU8 read_image(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
    throw ImageIOError("'" + path + "' is neither PNG nor binary PPM");
}

void write_image(const std::string& path, const ImageU8& image) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".png")
        write_file_bytes(path, encode_png(image));
    else if (ext == ".ppm")
        write_file_bytes(path, encode_ppm(image));
    else
        throw ImageIOError("unsupported image extension '" + ext + "' (use .png or .ppm)");
}

}  // namespace tsit
