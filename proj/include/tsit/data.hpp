#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsit/image_io.hpp"
#include "tsit/ops.hpp"
#include "tsit/rng.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// image <-> tensor conversion
//
// Bytes map linearly onto [-1, 1]: p -> 2p/255 - 1.  The reverse maps
// v -> round((v+1) * 127.5) with clamping, so every byte value round-trips
// exactly.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> image_to_tensor(const ImageU8& image) {
    if (image.width == 0 || image.height == 0 ||
        image.pixels.size() != image.width * image.height * 3)
        throw DataError("image_to_tensor: malformed image buffer");
    const std::size_t H = image.height, W = image.width;
    std::vector<T> v(3 * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                v[(c * H + y) * W + x] =
                    T(2) * T(image.pixels[(y * W + x) * 3 + c]) / T(255) - T(1);
    return Tensor<T>::from(Shape{1, 3, H, W}, std::move(v));
}

template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
    if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 3)
        throw DataError("tensor_to_image expects a 1x3xHxW tensor");
    const std::size_t H = t.dim(2), W = t.dim(3);
    ImageU8 image;
    image.width = W;
    image.height = H;
    image.pixels.resize(W * H * 3);
    const auto& v = t.vec();
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double val = (double(v[(c * H + y) * W + x]) + 1.0) * 127.5;
                const double rounded = std::floor(val + 0.5);
                image.pixels[(y * W + x) * 3 + c] =
                    std::uint8_t(std::clamp(rounded, 0.0, 255.0));
            }
    return image;
}

// ---------------------------------------------------------------------------
// deterministic epoch shuffling
// ---------------------------------------------------------------------------

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                            std::uint64_t epoch) {
    return seeded_permutation(n, derive_seed(seed, 0xE20C, epoch));
}

// ---------------------------------------------------------------------------
// synthetic paired dataset
//
// Each sample is a triple (content, style, target) plus per-pixel region
// label maps:
//   - layout: the canvas is split into four rectangles by one random cut and
//     then one more random cut in each half (axis alternates);
//   - texture: a smooth bounded pattern, tanh of a 4x nearest-upsampled
//     Gaussian grid, giving the feature extractor local structure to respond
//     to everywhere;
//   - content: per-region identity shades blended with the texture,
//     content = 0.55 * shade(labels) + 0.45 * texture;
//   - target:  the same layout and texture painted with the sample's palette,
//     target = 0.55 * palette(labels) + 0.45 * texture, so target - content
//     is constant inside each region;
//   - style:   an independent exemplar from the output domain - a second
//     layout and texture painted with the same palette.
// Every sample is generated from derive_seed(seed, tag, index), so datasets
// are fully deterministic and samples are independent of `count`.
// ---------------------------------------------------------------------------

template <typename T>
struct SynthSample {
    Tensor<T> content;
    Tensor<T> style;
    Tensor<T> target;
    std::vector<int> labels;        // H*W region ids of content/target, row-major
    std::vector<int> style_labels;  // H*W region ids of the style exemplar
    std::array<std::array<T, 3>, 4> palette{};  // region id -> rgb in [-1, 1]
    int num_classes = 0;
};

template <typename T>
struct SampleBatch {
    Tensor<T> content;
    Tensor<T> style;
    Tensor<T> target;
};

template <typename T>
class SyntheticDataset {
  public:
    static constexpr int kRegions = 4;
    static constexpr double kStructure = 0.55;  // weight of shades/palette
    static constexpr double kTexture = 0.45;    // weight of the texture layer

    SyntheticDataset(std::size_t count, std::size_t height, std::size_t width,
                     std::uint64_t seed)
        : count_(count), height_(height), width_(width), seed_(seed) {
        if (count == 0) throw DataError("synthetic dataset needs at least one sample");
        if (height < 8 || width < 8)
            throw DataError("synthetic dataset extent must be at least 8x8");
        if (height % 4 != 0 || width % 4 != 0)
            throw DataError("synthetic dataset extent must be divisible by 4");
    }

    std::size_t size() const { return count_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    int num_classes() const { return kRegions; }

    // shade identifying region id k, identical across samples
    static T shade(int id) { return T(-0.75) + T(1.5) * T(id) / T(kRegions - 1); }

    SynthSample<T> sample(std::size_t index) const {
        if (index >= count_) throw DataError("sample index out of range");
        Rng r(derive_seed(seed_, 0xDA7A, index));
        const std::size_t H = height_, W = width_;

        const auto labels = make_layout(r, H, W);
        std::array<std::array<T, 3>, kRegions> palette;
        for (int k = 0; k < kRegions; ++k)
            for (int c = 0; c < 3; ++c) palette[k][c] = T(-0.85 + 1.7 * r.uniform01());
        const auto texture = make_texture(r, H, W);

        // the style exemplar gets its own layout and texture, same palette
        const auto style_labels = make_layout(r, H, W);
        const auto style_texture = make_texture(r, H, W);

        std::vector<T> content(3 * H * W), style(3 * H * W), target(3 * H * W);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t p = y * W + x;
                for (std::size_t c = 0; c < 3; ++c) {
                    const std::size_t at = (c * H + y) * W + x;
                    const T tex = texture[at];
                    content[at] = T(kStructure) * shade(labels[p]) + T(kTexture) * tex;
                    target[at] = T(kStructure) * palette[labels[p]][c] + T(kTexture) * tex;
                    style[at] = T(kStructure) * palette[style_labels[p]][c] +
                                T(kTexture) * style_texture[at];
                }
            }

        SynthSample<T> s;
        s.content = Tensor<T>::from(Shape{1, 3, H, W}, std::move(content));
        s.style = Tensor<T>::from(Shape{1, 3, H, W}, std::move(style));
        s.target = Tensor<T>::from(Shape{1, 3, H, W}, std::move(target));
        s.labels = labels;
        s.style_labels = style_labels;
        s.palette = palette;
        s.num_classes = kRegions;
        return s;
    }

  private:
    // region layout: one primary cut, then one secondary cut per half
    static std::vector<int> make_layout(Rng& r, std::size_t H, std::size_t W) {
        const bool vertical_first = r.uniform01() < 0.5;
        const std::size_t c0 = cut(r, vertical_first ? W : H);
        const std::size_t c1 = cut(r, vertical_first ? H : W);
        const std::size_t c2 = cut(r, vertical_first ? H : W);
        std::vector<int> labels(H * W);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                int id;
                if (vertical_first)
                    id = x < c0 ? (y < c1 ? 0 : 1) : (y < c2 ? 2 : 3);
                else
                    id = y < c0 ? (x < c1 ? 0 : 1) : (x < c2 ? 2 : 3);
                labels[y * W + x] = id;
            }
        return labels;
    }

    // smooth bounded 3-channel texture: tanh of a 4x nearest-upsampled
    // Gaussian grid (values strictly inside (-1, 1))
    static std::vector<T> make_texture(Rng& r, std::size_t H, std::size_t W) {
        const std::size_t h4 = H / 4, w4 = W / 4;
        std::vector<double> grid(3 * h4 * w4);
        for (auto& g : grid) g = 0.5 * r.normal();
        std::vector<T> tex(3 * H * W);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x)
                    tex[(c * H + y) * W + x] =
                        T(std::tanh(grid[(c * h4 + y / 4) * w4 + x / 4]));
        return tex;
    }

    // split position in the middle half of the extent, so regions never vanish
    static std::size_t cut(Rng& r, std::size_t extent) {
        const std::size_t lo = extent / 4;
        const std::size_t span = extent - 2 * lo;
        return lo + std::size_t(r.uniform01() * double(span));
    }

    std::size_t count_, height_, width_;
    std::uint64_t seed_;
};

template <typename T>
Tensor<T> one_hot_labels(const std::vector<int>& labels, int num_classes, std::size_t height,
                         std::size_t width) {
    if (labels.size() != height * width)
        throw DataError("one_hot_labels: label map does not match extent");
    if (num_classes <= 0) throw DataError("one_hot_labels: need at least one class");
    std::vector<T> v(std::size_t(num_classes) * height * width, T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int id = labels[i];
        if (id < 0 || id >= num_classes) throw DataError("one_hot_labels: id out of range");
        v[std::size_t(id) * height * width + i] = T(1);
    }
    return Tensor<T>::from(Shape{1, std::size_t(num_classes), height, width}, std::move(v));
}

template <typename T>
SampleBatch<T> stack_samples(const std::vector<SynthSample<T>>& samples) {
    if (samples.empty()) throw DataError("stack_samples: empty batch");
    SampleBatch<T> b{samples[0].content, samples[0].style, samples[0].target};
    for (std::size_t i = 1; i < samples.size(); ++i) {
        b.content = concat(b.content, samples[i].content, 0);
        b.style = concat(b.style, samples[i].style, 0);
        b.target = concat(b.target, samples[i].target, 0);
    }
    return b;
}

// ---------------------------------------------------------------------------
// directory listing for image folders
// ---------------------------------------------------------------------------

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm") out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// directory-backed datasets
//
// paired:    content_dir/style_dir matched by basename, index-aligned draws
// unpaired:  independently reshuffled draws from the two directories
// semantic:  label-mask dir (single-channel integer class ids) + image dir
//            matched by basename; labels yield one-hot maps at batch time
// ---------------------------------------------------------------------------

// Index of the m-th draw over an n-item corpus, reshuffled every epoch.
inline std::size_t draw_index(std::size_t n, std::uint64_t shuffle_seed, std::uint64_t m) {
    if (n == 0) throw DataError("draw_index: empty corpus");
    const std::uint64_t epoch = m / n;
    return epoch_order(n, shuffle_seed, epoch)[std::size_t(m % n)];
}

// One image file as a 1x3xHxW tensor in [-1, 1], nearest-resized when a
// target extent is given.
template <typename T>
Tensor<T> load_image_tensor(const std::string& path, std::size_t resize_h = 0,
                            std::size_t resize_w = 0) {
    Tensor<T> t = image_to_tensor<T>(read_image(path));
    if (resize_h != 0 && resize_w != 0 && (t.dim(2) != resize_h || t.dim(3) != resize_w))
        t = resize_nearest(t, resize_h, resize_w);
    return t;
}

// Integer class ids from a gray mask file (every pixel must have R==G==B).
inline std::vector<int> read_label_mask(const std::string& path, std::size_t& height,
                                        std::size_t& width) {
    const ImageU8 image = read_image(path);
    height = image.height;
    width = image.width;
    std::vector<int> labels(height * width);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint8_t r = image.pixels[3 * i], g = image.pixels[3 * i + 1],
                           b = image.pixels[3 * i + 2];
        if (r != g || g != b)
            throw DataError("'" + path + "': label masks must be gray (one class id per pixel)");
        labels[i] = int(r);
    }
    return labels;
}

// Nearest-neighbour resize on an integer label grid; never interpolates, so
// the label set is preserved. Row i samples source row floor(i*H/Ho).
inline std::vector<int> resize_labels(const std::vector<int>& labels, std::size_t h,
                                      std::size_t w, std::size_t out_h, std::size_t out_w) {
    if (labels.size() != h * w) throw DataError("resize_labels: label map does not match extent");
    if (out_h == 0 || out_w == 0) throw DataError("resize_labels: target extent must be positive");
    std::vector<int> out(out_h * out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        const std::size_t si = i * h / out_h;
        for (std::size_t j = 0; j < out_w; ++j) out[i * out_w + j] = labels[si * w + j * w / out_w];
    }
    return out;
}

template <typename T>
struct TrainSample {
    Tensor<T> content;  // content-stream input (image, or one-hot label map)
    Tensor<T> style;    // style exemplar / real pair
    Tensor<T> target;   // ground-truth pair when one exists, else the exemplar
};

enum class DirMode { paired, unpaired, semantic };

template <typename T>
class DirectoryDataset {
  public:
    // paired/unpaired: dir_a = content images, dir_b = style images.
    // semantic: dir_a = label masks, dir_b = real images.
    DirectoryDataset(DirMode mode, const std::string& dir_a, const std::string& dir_b,
                     std::size_t resize_h = 0, std::size_t resize_w = 0, int num_classes = 0)
        : mode_(mode), resize_h_(resize_h), resize_w_(resize_w), num_classes_(num_classes) {
        paths_a_ = list_images(dir_a);
        paths_b_ = list_images(dir_b);
        if (paths_a_.empty()) throw DataError("'" + dir_a + "' contains no .png/.ppm images");
        if (paths_b_.empty()) throw DataError("'" + dir_b + "' contains no .png/.ppm images");
        if (mode != DirMode::unpaired) {
            if (paths_a_.size() != paths_b_.size())
                throw DataError("paired directories differ in size: '" + dir_a + "' has " +
                                std::to_string(paths_a_.size()) + " images, '" + dir_b +
                                "' has " + std::to_string(paths_b_.size()));
            for (std::size_t i = 0; i < paths_a_.size(); ++i) {
                const auto stem_a = std::filesystem::path(paths_a_[i]).stem().string();
                const auto stem_b = std::filesystem::path(paths_b_[i]).stem().string();
                if (stem_a != stem_b)
                    throw DataError("paired basename mismatch: '" + paths_a_[i] + "' vs '" +
                                    paths_b_[i] + "'");
            }
        }
        if (mode == DirMode::semantic && num_classes_ == 0) {
            int max_id = 0;
            for (const auto& path : paths_a_) {
                std::size_t h = 0, w = 0;
                for (int id : read_label_mask(path, h, w)) max_id = std::max(max_id, id);
            }
            num_classes_ = max_id + 1;
        }
    }

    DirMode mode() const { return mode_; }
    std::size_t size() const { return std::max(paths_a_.size(), paths_b_.size()); }
    int num_classes() const { return num_classes_; }

    // The m-th training draw; epochs reshuffle deterministically from
    // shuffle_seed (the two sides independently in unpaired mode).
    TrainSample<T> sample(std::uint64_t m, std::uint64_t shuffle_seed) const {
        TrainSample<T> s;
        if (mode_ == DirMode::unpaired) {
            const auto ia = draw_index(paths_a_.size(), derive_seed(shuffle_seed, 1), m);
            const auto ib = draw_index(paths_b_.size(), derive_seed(shuffle_seed, 2), m);
            s.content = load_image_tensor<T>(paths_a_[ia], resize_h_, resize_w_);
            s.style = load_image_tensor<T>(paths_b_[ib], resize_h_, resize_w_);
            s.target = s.style;
            return s;
        }
        const auto idx = draw_index(paths_a_.size(), shuffle_seed, m);
        if (mode_ == DirMode::paired) {
            s.content = load_image_tensor<T>(paths_a_[idx], resize_h_, resize_w_);
            s.style = load_image_tensor<T>(paths_b_[idx], resize_h_, resize_w_);
        } else {
            std::size_t h = 0, w = 0;
            auto labels = read_label_mask(paths_a_[idx], h, w);
            if (resize_h_ != 0 && resize_w_ != 0 && (h != resize_h_ || w != resize_w_)) {
                labels = resize_labels(labels, h, w, resize_h_, resize_w_);
                h = resize_h_;
                w = resize_w_;
            }
            for (int id : labels)
                if (id >= num_classes_)
                    throw DataError("'" + paths_a_[idx] + "': class id " + std::to_string(id) +
                                    " exceeds num_classes=" + std::to_string(num_classes_));
            s.content = one_hot_labels<T>(labels, num_classes_, h, w);
            s.style = load_image_tensor<T>(paths_b_[idx], resize_h_, resize_w_);
        }
        s.target = s.style;
        return s;
    }

  private:
    DirMode mode_;
    std::size_t resize_h_, resize_w_;
    int num_classes_;
    std::vector<std::string> paths_a_, paths_b_;
};

template <typename T>
SampleBatch<T> stack_samples(const std::vector<TrainSample<T>>& samples) {
    if (samples.empty()) throw DataError("stack_samples: empty batch");
    SampleBatch<T> b{samples[0].content, samples[0].style, samples[0].target};
    for (std::size_t i = 1; i < samples.size(); ++i) {
        b.content = concat(b.content, samples[i].content, 0);
        b.style = concat(b.style, samples[i].style, 0);
        b.target = concat(b.target, samples[i].target, 0);
    }
    return b;
}

}  // namespace tsit
