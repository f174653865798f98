#pragma once

// Binary training-state container: named typed arrays, RNG state strings, a
// step counter, and a free-form config text block. Little-endian on disk,
// bit-exact round trip.

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsit/tensor.hpp"

namespace tsit {

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
    return DType::F32;
}
template <>
constexpr DType dtype_of<double>() {
    return DType::F64;
}
template <>
constexpr DType dtype_of<std::uint64_t>() {
    return DType::U64;
}

inline std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U64: return 8;
    }
    throw CheckpointError("unknown dtype tag");
}

struct NamedArray {
    std::string name;
    DType dtype = DType::F32;
    Shape shape;
    std::vector<std::uint8_t> bytes;  // little-endian payload

    std::size_t numel() const { return bytes.size() / dtype_size(dtype); }

    template <typename T>
    static NamedArray make(std::string name, Shape shape, const std::vector<T>& values) {
        if (shape_numel(shape) != values.size())
            throw CheckpointError("array '" + name + "': shape does not match value count");
        NamedArray a;
        a.name = std::move(name);
        a.dtype = dtype_of<T>();
        a.shape = std::move(shape);
        a.bytes.resize(values.size() * sizeof(T));
        std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
        return a;
    }

    template <typename T>
    std::vector<T> as() const {
        if (dtype != dtype_of<T>())
            throw CheckpointError("array '" + name + "': dtype mismatch on load");
        std::vector<T> out(bytes.size() / sizeof(T));
        std::memcpy(out.data(), bytes.data(), bytes.size());
        return out;
    }
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t step = 0;
    std::string config_text;
    std::vector<NamedArray> tensors;
    std::vector<std::pair<std::string, std::string>> rng_states;

    const NamedArray* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
    const NamedArray& require(const std::string& name) const {
        if (const auto* t = find(name)) return *t;
        throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    }
    const std::string* find_rng(const std::string& name) const {
        for (const auto& [n, s] : rng_states)
            if (n == name) return &s;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tsit
