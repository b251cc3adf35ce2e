#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Build-wide scalar precision. Defaults to 64-bit; a 32-bit build is selected
// with -DCLORA_SCALAR_F32 (training-precision builds).
namespace clora {

#ifdef CLORA_SCALAR_F32
using scalar = float;
#else
using scalar = double;
#endif

inline constexpr bool scalar_is_f64 = sizeof(scalar) == 8;

// Error raised by every shape/dimension validation in the library.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config / file-format validation failures (bad magic, unknown keys, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit FNV-1a, used for config digests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

template <typename T>
std::string join(const std::vector<T>& v, const char* sep = ",") {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << sep;
        os << v[i];
    }
    return os.str();
}

}  // namespace clora
