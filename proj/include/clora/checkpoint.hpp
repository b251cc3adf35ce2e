#pragma once

// Binary serialization.
//
// Raw tensor file ("CLTN"): magic, version u32 LE, ndim u32, dims u64 LE,
// dtype code u8 (1 = f32, 2 = f64), then raw little-endian scalar data.
//
// Checkpoint ("CLCK"): header with format version, config digest,
// architecture digest and an rng-state blob, followed by a named tensor
// table of CLTN payloads. Round-trips are bitwise.

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "clora/rng.hpp"
#include "clora/tensor.hpp"

namespace clora {

namespace detail {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));  // little-endian host assumed (x86/arm64)
}

template <typename T>
T take(const std::string& in, size_t& off) {
    if (off + sizeof(T) > in.size()) throw IoError("truncated binary payload");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

inline void put_str(std::string& out, const std::string& s) {
    put<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out += s;
}

inline std::string take_str(const std::string& in, size_t& off) {
    const uint32_t n = take<uint32_t>(in, off);
    if (off + n > in.size()) throw IoError("truncated string payload");
    std::string s = in.substr(off, n);
    off += n;
    return s;
}

}  // namespace detail

inline constexpr uint32_t kTensorFormatVersion = 1;
inline constexpr uint32_t kCheckpointFormatVersion = 1;

inline std::string encode_tensor(const Tensor& t) {
    std::string out = "CLTN";
    detail::put<uint32_t>(out, kTensorFormatVersion);
    detail::put<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) detail::put<uint64_t>(out, static_cast<uint64_t>(d));
    detail::put<uint8_t>(out, scalar_is_f64 ? 2 : 1);
    for (scalar v : t.data()) detail::put<scalar>(out, v);
    return out;
}

inline Tensor decode_tensor(const std::string& in, size_t& off) {
    if (in.compare(off, 4, "CLTN") != 0) throw IoError("bad tensor magic");
    off += 4;
    const uint32_t ver = detail::take<uint32_t>(in, off);
    if (ver != kTensorFormatVersion) throw IoError("unsupported tensor format version " + std::to_string(ver));
    const uint32_t ndim = detail::take<uint32_t>(in, off);
    Shape shape;
    for (uint32_t i = 0; i < ndim; ++i)
        shape.push_back(static_cast<int64_t>(detail::take<uint64_t>(in, off)));
    const uint8_t dtype = detail::take<uint8_t>(in, off);
    const int64_t n = shape_numel(shape);
    std::vector<scalar> data(static_cast<size_t>(n));
    if (dtype == 2) {
        for (auto& v : data) v = static_cast<scalar>(detail::take<double>(in, off));
    } else if (dtype == 1) {
        for (auto& v : data) v = static_cast<scalar>(detail::take<float>(in, off));
    } else {
        throw IoError("unknown tensor dtype code " + std::to_string(dtype));
    }
    return Tensor::from_data(shape, std::move(data));
}

inline void save_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    const std::string payload = encode_tensor(t);
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("short write to " + path);
}

inline Tensor load_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t off = 0;
    return decode_tensor(payload, off);
}

// Named rng-stream states serialized into the checkpoint header.
struct RngStateBlob {
    std::vector<std::pair<std::string, std::array<uint64_t, 4>>> streams;

    std::string encode() const {
        std::string out;
        detail::put<uint32_t>(out, static_cast<uint32_t>(streams.size()));
        for (const auto& [name, st] : streams) {
            detail::put_str(out, name);
            for (uint64_t w : st) detail::put<uint64_t>(out, w);
        }
        return out;
    }

    static RngStateBlob decode(const std::string& in) {
        RngStateBlob b;
        size_t off = 0;
        const uint32_t n = detail::take<uint32_t>(in, off);
        for (uint32_t i = 0; i < n; ++i) {
            std::string name = detail::take_str(in, off);
            std::array<uint64_t, 4> st{};
            for (auto& w : st) w = detail::take<uint64_t>(in, off);
            b.streams.emplace_back(std::move(name), st);
        }
        return b;
    }

    const std::array<uint64_t, 4>* find(const std::string& name) const {
        for (const auto& [n, st] : streams)
            if (n == name) return &st;
        return nullptr;
    }
};

struct Checkpoint {
    uint64_t config_digest = 0;
    uint64_t arch_digest = 0;
    std::string rng_blob;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string out = "CLCK";
    detail::put<uint32_t>(out, kCheckpointFormatVersion);
    detail::put<uint64_t>(out, ck.config_digest);
    detail::put<uint64_t>(out, ck.arch_digest);
    detail::put_str(out, ck.rng_blob);
    detail::put<uint32_t>(out, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        detail::put_str(out, name);
        detail::put_str(out, encode_tensor(t));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path);
    std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (in.size() < 4 || in.compare(0, 4, "CLCK") != 0) throw IoError(path + ": bad checkpoint magic");
    size_t off = 4;
    const uint32_t ver = detail::take<uint32_t>(in, off);
    if (ver != kCheckpointFormatVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(ver));
    Checkpoint ck;
    ck.config_digest = detail::take<uint64_t>(in, off);
    ck.arch_digest = detail::take<uint64_t>(in, off);
    ck.rng_blob = detail::take_str(in, off);
    const uint32_t n = detail::take<uint32_t>(in, off);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = detail::take_str(in, off);
        std::string payload = detail::take_str(in, off);
        size_t poff = 0;
        ck.tensors.emplace_back(std::move(name), decode_tensor(payload, poff));
    }
    return ck;
}

// Copies the model tensors (lora/..., mapper/...) of a checkpoint into live
// parameter storage. Unknown model names are rejected against the live
// architecture, and every live parameter must be covered.
inline void restore_model_params(const Checkpoint& ck,
                                 const std::vector<std::pair<std::string, Tensor>>& live) {
    auto is_model = [](const std::string& n) {
        return n.rfind("lora/", 0) == 0 || n.rfind("mapper/", 0) == 0;
    };
    std::map<std::string, Tensor> live_by_name;
    for (const auto& [n, t] : live) live_by_name.emplace(n, t);
    size_t covered = 0;
    for (const auto& [name, stored] : ck.tensors) {
        if (!is_model(name)) continue;  // optimizer state etc. handled elsewhere
        auto it = live_by_name.find(name);
        if (it == live_by_name.end())
            throw IoError("checkpoint tensor " + name + " does not exist in the live architecture");
        if (it->second.shape() != stored.shape())
            throw IoError("checkpoint tensor " + name + " has shape " + shape_str(stored.shape()) +
                          ", live expects " + shape_str(it->second.shape()));
        Tensor dst = it->second;
        dst.data() = stored.data();
        covered++;
    }
    if (covered != live_by_name.size())
        throw IoError("checkpoint covers " + std::to_string(covered) + " of " +
                      std::to_string(live_by_name.size()) + " live parameters");
}

}  // namespace clora
