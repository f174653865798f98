#include "tsit/checkpoint.hpp"

#include <cstdio>
#include <memory>

// On-disk layout (all integers little-endian):
//   "TSIT" | u32 version | u64 step
//   u64 config_len | config bytes
//   u64 tensor_count
//     per tensor: u32 name_len | name | u8 dtype | u32 ndim | u64 dims... |
//                 u64 byte_len | payload
//   u64 rng_count
//     per state: u32 name_len | name | u64 state_len | state bytes

namespace tsit {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'I', 'T'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_bytes(std::FILE* f, const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw CheckpointError("write failed");
}

template <typename U>
void write_le(std::FILE* f, U value) {
    std::uint8_t buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = std::uint8_t((value >> (8 * i)) & 0xFF);
    write_bytes(f, buf, sizeof(U));
}

void write_string(std::FILE* f, const std::string& s, bool long_len) {
    if (long_len)
        write_le<std::uint64_t>(f, s.size());
    else
        write_le<std::uint32_t>(f, std::uint32_t(s.size()));
    write_bytes(f, s.data(), s.size());
}

void read_bytes(std::FILE* f, void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n)
        throw CheckpointError("truncated checkpoint file");
}

template <typename U>
U read_le(std::FILE* f) {
    std::uint8_t buf[sizeof(U)];
    read_bytes(f, buf, sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        value |= U(buf[i]) << (8 * i);
    return value;
}

std::string read_string(std::FILE* f, bool long_len) {
    const std::uint64_t n =
        long_len ? read_le<std::uint64_t>(f) : std::uint64_t(read_le<std::uint32_t>(f));
    if (n > (std::uint64_t(1) << 33))
        throw CheckpointError("implausible string length in checkpoint");
    std::string s(n, '\0');
    read_bytes(f, s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
    write_bytes(f.get(), kMagic, 4);
    write_le<std::uint32_t>(f.get(), kVersion);
    write_le<std::uint64_t>(f.get(), ck.step);
    write_string(f.get(), ck.config_text, /*long_len=*/true);
    write_le<std::uint64_t>(f.get(), ck.tensors.size());
    for (const auto& t : ck.tensors) {
        write_string(f.get(), t.name, false);
        write_le<std::uint8_t>(f.get(), std::uint8_t(t.dtype));
        write_le<std::uint32_t>(f.get(), std::uint32_t(t.shape.size()));
        for (std::size_t d : t.shape) write_le<std::uint64_t>(f.get(), d);
        write_le<std::uint64_t>(f.get(), t.bytes.size());
        write_bytes(f.get(), t.bytes.data(), t.bytes.size());
    }
    write_le<std::uint64_t>(f.get(), ck.rng_states.size());
    for (const auto& [name, state] : ck.rng_states) {
        write_string(f.get(), name, false);
        write_string(f.get(), state, true);
    }
    if (std::fflush(f.get()) != 0) throw CheckpointError("flush failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError("cannot open '" + path + "' for reading");
    char magic[4];
    read_bytes(f.get(), magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint file (bad magic)");
    Checkpoint ck;
    ck.version = read_le<std::uint32_t>(f.get());
    if (ck.version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
    ck.step = read_le<std::uint64_t>(f.get());
    ck.config_text = read_string(f.get(), true);
    const std::uint64_t n_tensors = read_le<std::uint64_t>(f.get());
    if (n_tensors > (1u << 24)) throw CheckpointError("implausible tensor count");
    ck.tensors.reserve(n_tensors);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        NamedArray a;
        a.name = read_string(f.get(), false);
        const auto tag = read_le<std::uint8_t>(f.get());
        if (tag > std::uint8_t(DType::U64))
            throw CheckpointError("unknown dtype tag in tensor '" + a.name + "'");
        a.dtype = DType(tag);
        const std::uint32_t ndim = read_le<std::uint32_t>(f.get());
        if (ndim > 8) throw CheckpointError("implausible rank in tensor '" + a.name + "'");
        a.shape.resize(ndim);
        for (auto& d : a.shape) d = std::size_t(read_le<std::uint64_t>(f.get()));
        const std::uint64_t len = read_le<std::uint64_t>(f.get());
        if (len != shape_numel(a.shape) * dtype_size(a.dtype))
            throw CheckpointError("payload size mismatch in tensor '" + a.name + "'");
        a.bytes.resize(len);
        read_bytes(f.get(), a.bytes.data(), len);
        ck.tensors.push_back(std::move(a));
    }
    const std::uint64_t n_rng = read_le<std::uint64_t>(f.get());
    if (n_rng > (1u << 16)) throw CheckpointError("implausible RNG state count");
    for (std::uint64_t i = 0; i < n_rng; ++i) {
        std::string name = read_string(f.get(), false);
        std::string state = read_string(f.get(), true);
        ck.rng_states.emplace_back(std::move(name), std::move(state));
    }
    return ck;
}

}  // namespace tsit
