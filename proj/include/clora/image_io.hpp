#pragma once

// Lossless netpbm IO: 8-bit P6 PPM for RGB images and 16-bit P5 PGM for
// structure maps. Binary, byte-exact across platforms.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "clora/common.hpp"

namespace clora {

struct ImageU8 {
    int64_t width = 0, height = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

    uint8_t at(int64_t y, int64_t x, int c) const {
        return rgb[static_cast<size_t>((y * width + x) * 3 + c)];
    }
    uint8_t& at(int64_t y, int64_t x, int c) {
        return rgb[static_cast<size_t>((y * width + x) * 3 + c)];
    }
};

struct MapU16 {
    int64_t width = 0, height = 0;
    std::vector<uint16_t> v;  // row-major

    uint16_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * width + x)]; }
    uint16_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * width + x)]; }
};

inline void write_ppm(const std::string& path, const ImageU8& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!f) throw IoError("short write to " + path);
}

namespace detail {
inline int pnm_token(std::istream& f) {
    int c = f.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = f.get();
        c = f.get();
    }
    int v = 0;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = f.get();
    }
    return v;
}
}  // namespace detail

inline ImageU8 read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    char m0 = static_cast<char>(f.get()), m1 = static_cast<char>(f.get());
    if (m0 != 'P' || m1 != '6') throw IoError(path + ": not a P6 ppm");
    ImageU8 img;
    img.width = detail::pnm_token(f);
    img.height = detail::pnm_token(f);
    const int maxv = detail::pnm_token(f);
    if (maxv != 255) throw IoError(path + ": expected 8-bit ppm");
    img.rgb.resize(static_cast<size_t>(img.width * img.height * 3));
    f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw IoError(path + ": truncated ppm");
    return img;
}

// 16-bit PGM, big-endian sample order per the format definition
inline void write_pgm16(const std::string& path, const MapU16& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P5\n" << map.width << " " << map.height << "\n65535\n";
    std::vector<uint8_t> bytes;
    bytes.reserve(map.v.size() * 2);
    for (uint16_t s : map.v) {
        bytes.push_back(static_cast<uint8_t>(s >> 8));
        bytes.push_back(static_cast<uint8_t>(s & 0xff));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

inline MapU16 read_pgm16(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    char m0 = static_cast<char>(f.get()), m1 = static_cast<char>(f.get());
    if (m0 != 'P' || m1 != '5') throw IoError(path + ": not a P5 pgm");
    MapU16 map;
    map.width = detail::pnm_token(f);
    map.height = detail::pnm_token(f);
    const int maxv = detail::pnm_token(f);
    if (maxv != 65535) throw IoError(path + ": expected 16-bit pgm");
    std::vector<uint8_t> bytes(static_cast<size_t>(map.width * map.height * 2));
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(path + ": truncated pgm");
    map.v.resize(static_cast<size_t>(map.width * map.height));
    for (size_t i = 0; i < map.v.size(); ++i)
        map.v[i] = static_cast<uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
    return map;
}

}  // namespace clora
