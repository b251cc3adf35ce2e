#pragma once

// Synthetic scene generator with paired style/structure ground truth.
//
// A scene is a single textured shape on a gray background. Rendering, the
// structure map (silhouette with distance-shaded interior) and the style
// descriptor are all pure functions of the scene record, and the structure
// map is recoverable from the rendered image exactly: foreground pixels are
// chromatic by construction, backgrounds are pure gray, and the map is a
// deterministic function of the foreground mask.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clora/checkpoint.hpp"
#include "clora/image_io.hpp"
#include "clora/rng.hpp"
#include "clora/tensor.hpp"

namespace clora {

inline constexpr int kNumPalettes = 8;
inline constexpr int kNumTextures = 4;
inline constexpr int kNumBackgrounds = 6;
inline constexpr int kDescriptorDim = 22;  // 16 hist + 2 transitions + 3 mean rgb + 1 coverage
inline constexpr uint64_t kStyleEncoderSeed = 0x5EEDC0DEull;

// (A, B) color pairs; every entry keeps max-min channel spread >= 48 so the
// chroma test separates foreground from the gray backgrounds after 8-bit
// quantization.
inline const std::array<std::array<std::array<uint8_t, 3>, 2>, kNumPalettes>& palettes() {
    static const std::array<std::array<std::array<uint8_t, 3>, 2>, kNumPalettes> p = {{
        {{{220, 50, 40}, {245, 200, 40}}},
        {{{40, 70, 220}, {40, 200, 230}}},
        {{{40, 160, 60}, {160, 230, 70}}},
        {{{150, 50, 210}, {240, 120, 210}}},
        {{{245, 140, 30}, {150, 90, 30}}},
        {{{30, 160, 150}, {30, 70, 140}}},
        {{{225, 40, 160}, {120, 40, 230}}},
        {{{235, 185, 25}, {145, 150, 35}}},
    }};
    return p;
}

inline const std::array<uint8_t, kNumBackgrounds>& backgrounds() {
    static const std::array<uint8_t, kNumBackgrounds> b = {40, 70, 100, 130, 160, 190};
    return b;
}

enum class ShapeClass : int { circle = 1, square = 2, triangle = 3 };

struct SyntheticScene {
    ShapeClass cls = ShapeClass::circle;
    int palette = 0;
    int texture = 0;
    int background = 0;
    double cx = 16, cy = 16, size = 8;
};

inline SyntheticScene sample_scene(RngStream& rng, int64_t image_size) {
    SyntheticScene s;
    s.cls = static_cast<ShapeClass>(1 + rng.uniform_int(0, 2));
    s.palette = static_cast<int>(rng.uniform_int(0, kNumPalettes - 1));
    s.texture = static_cast<int>(rng.uniform_int(0, kNumTextures - 1));
    s.background = static_cast<int>(rng.uniform_int(0, kNumBackgrounds - 1));
    const double span = static_cast<double>(image_size);
    s.size = rng.uniform(span * 0.18, span * 0.34);
    const double margin = s.size + 1.5;
    s.cx = rng.uniform(margin, span - margin);
    s.cy = rng.uniform(margin, span - margin);
    return s;
}

inline bool inside_shape(const SyntheticScene& s, double px, double py) {
    const double dx = px - s.cx, dy = py - s.cy;
    switch (s.cls) {
        case ShapeClass::circle:
            return dx * dx + dy * dy <= s.size * s.size;
        case ShapeClass::square:
            return std::max(std::fabs(dx), std::fabs(dy)) <= s.size * 0.88;
        case ShapeClass::triangle: {
            const double x0 = s.cx, y0 = s.cy - s.size;
            const double x1 = s.cx - 0.95 * s.size, y1 = s.cy + 0.78 * s.size;
            const double x2 = s.cx + 0.95 * s.size, y2 = s.cy + 0.78 * s.size;
            auto side = [&](double ax, double ay, double bx, double by) {
                return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            };
            const double d0 = side(x0, y0, x1, y1);
            const double d1 = side(x1, y1, x2, y2);
            const double d2 = side(x2, y2, x0, y0);
            const bool neg = d0 < 0 || d1 < 0 || d2 < 0;
            const bool pos = d0 > 0 || d1 > 0 || d2 > 0;
            return !(neg && pos);
        }
    }
    return false;
}

inline std::vector<uint8_t> scene_mask(const SyntheticScene& s, int64_t n) {
    std::vector<uint8_t> mask(static_cast<size_t>(n * n), 0);
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
            mask[static_cast<size_t>(y * n + x)] =
                inside_shape(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5) ? 1 : 0;
    return mask;
}

inline ImageU8 render_scene(const SyntheticScene& s, int64_t n) {
    ImageU8 img;
    img.width = n;
    img.height = n;
    img.rgb.assign(static_cast<size_t>(n * n * 3), backgrounds()[static_cast<size_t>(s.background)]);
    const auto& pal = palettes()[static_cast<size_t>(s.palette)];
    const auto mask = scene_mask(s, n);
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            if (!mask[static_cast<size_t>(y * n + x)]) continue;
            bool b = false;
            switch (s.texture) {
                case 0: b = false; break;
                case 1: b = ((y >> 1) & 1) != 0; break;
                case 2: b = (((x >> 1) + (y >> 1)) & 1) != 0; break;
                case 3: b = (x % 3 == 1 && y % 3 == 1); break;
            }
            const auto& c = pal[b ? 1 : 0];
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[static_cast<size_t>(ch)];
        }
    return img;
}

// Chromatic pixels are foreground. Rendered palettes keep a channel spread
// of at least 48, backgrounds exactly 0, so 24 splits them cleanly.
inline std::vector<uint8_t> image_mask(const ImageU8& img) {
    std::vector<uint8_t> mask(static_cast<size_t>(img.width * img.height), 0);
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            const int r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            const int mx = std::max(r, std::max(g, b)), mn = std::min(r, std::min(g, b));
            mask[static_cast<size_t>(y * img.width + x)] = (mx - mn) > 24 ? 1 : 0;
        }
    return mask;
}

// Silhouette with distance-shaded interior: background exactly 0, inside
// the exact euclidean distance to the nearest background (or off-image)
// pixel, normalized by its maximum and quantized to 16 bits.
inline MapU16 mask_to_structure_map(const std::vector<uint8_t>& mask, int64_t n) {
    std::vector<int64_t> d2(static_cast<size_t>(n * n), 0);
    std::vector<std::pair<int64_t, int64_t>> bg;
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
            if (!mask[static_cast<size_t>(y * n + x)]) bg.emplace_back(y, x);
    int64_t max_d2 = 0;
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            if (!mask[static_cast<size_t>(y * n + x)]) continue;
            // off-image counts as background
            int64_t best = std::min(std::min(y + 1, n - y), std::min(x + 1, n - x));
            best *= best;
            for (const auto& [by, bx] : bg) {
                const int64_t dy = y - by, dx = x - bx;
                const int64_t dd = dy * dy + dx * dx;
                if (dd < best) best = dd;
            }
            d2[static_cast<size_t>(y * n + x)] = best;
            max_d2 = std::max(max_d2, best);
        }
    MapU16 map;
    map.width = n;
    map.height = n;
    map.v.assign(static_cast<size_t>(n * n), 0);
    if (max_d2 == 0) return map;
    const double dmax = std::sqrt(static_cast<double>(max_d2));
    for (size_t i = 0; i < map.v.size(); ++i) {
        if (!mask[i]) continue;
        const double sv = std::sqrt(static_cast<double>(d2[i])) / dmax;
        map.v[i] = static_cast<uint16_t>(std::llround(sv * 65535.0));
    }
    return map;
}

// The structure "encoder": rendered image -> structure map. For dataset
// images this reproduces the stored ground-truth map bit for bit.
inline MapU16 oracle_structure_map(const ImageU8& img) {
    return mask_to_structure_map(image_mask(img), img.width);
}

// ---------------------------------------------------------------------------
// style descriptor and toy image encoder
// ---------------------------------------------------------------------------

// Palette-dominated descriptor computed from pixels alone: a 16-bin nearest
// canonical-color histogram over foreground pixels, color transition rates
// (texture), mean foreground color, and coverage.
inline std::vector<scalar> style_descriptor(const ImageU8& img) {
    std::vector<scalar> d(kDescriptorDim, 0);
    const auto mask = image_mask(img);
    const int64_t n = img.width;
    std::vector<int> assign(static_cast<size_t>(n * n), -1);
    int64_t fg = 0;
    double mr = 0, mg = 0, mb = 0;
    for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
            if (!mask[static_cast<size_t>(y * n + x)]) continue;
            fg++;
            const int r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            mr += r;
            mg += g;
            mb += b;
            int best = 0;
            int64_t bestd = -1;
            for (int p = 0; p < kNumPalettes; ++p)
                for (int c = 0; c < 2; ++c) {
                    const auto& col = palettes()[static_cast<size_t>(p)][static_cast<size_t>(c)];
                    const int64_t dr = r - col[0], dg = g - col[1], db = b - col[2];
                    const int64_t dd = dr * dr + dg * dg + db * db;
                    if (bestd < 0 || dd < bestd) {
                        bestd = dd;
                        best = p * 2 + c;
                    }
                }
            assign[static_cast<size_t>(y * n + x)] = best;
            d[static_cast<size_t>(best)] += 1;
        }
    if (fg > 0) {
        for (int i = 0; i < 16; ++i) d[static_cast<size_t>(i)] /= static_cast<scalar>(fg);
        int64_t ht = 0, vt = 0;
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                const int a = assign[static_cast<size_t>(y * n + x)];
                if (a < 0) continue;
                if (x + 1 < n) {
                    const int r = assign[static_cast<size_t>(y * n + x + 1)];
                    if (r >= 0 && r != a) ht++;
                }
                if (y + 1 < n) {
                    const int dn = assign[static_cast<size_t>((y + 1) * n + x)];
                    if (dn >= 0 && dn != a) vt++;
                }
            }
        d[16] = static_cast<scalar>(ht) / static_cast<scalar>(fg);
        d[17] = static_cast<scalar>(vt) / static_cast<scalar>(fg);
        d[18] = static_cast<scalar>(mr / (255.0 * static_cast<double>(fg)));
        d[19] = static_cast<scalar>(mg / (255.0 * static_cast<double>(fg)));
        d[20] = static_cast<scalar>(mb / (255.0 * static_cast<double>(fg)));
    }
    d[21] = static_cast<scalar>(fg) / static_cast<scalar>(n * n);
    return d;
}

// Fixed (seeded, untrained) random projection of the descriptor to d_img,
// standing in for a pretrained image embedding. Centering and per-group
// weights are constants of the encoder.
class StyleEncoder {
  public:
    explicit StyleEncoder(int64_t d_img = 64) : d_img_(d_img) {
        RngStream rng(kStyleEncoderSeed);
        proj_ = Tensor::randn({d_img, kDescriptorDim}, rng,
                              scalar(1) / std::sqrt(static_cast<scalar>(kDescriptorDim)));
    }

    int64_t dim() const { return d_img_; }

    Tensor embed(const std::vector<scalar>& descriptor) const {
        if (static_cast<int64_t>(descriptor.size()) != kDescriptorDim)
            detail::shape_fail("StyleEncoder", "descriptor length " + std::to_string(descriptor.size()));
        static const scalar center[kDescriptorDim] = {
            0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625,
            0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625,
            0.15,   0.15,   0.45,   0.45,   0.45,   0.2};
        static const scalar weight[kDescriptorDim] = {3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3,
                                                      3, 3, 3, 3, 3, 2, 2, 1, 1, 1, 1};
        Tensor e = Tensor::zeros({d_img_});
        for (int64_t i = 0; i < d_img_; ++i) {
            scalar acc = 0;
            for (int64_t j = 0; j < kDescriptorDim; ++j)
                acc += proj_.data()[static_cast<size_t>(i * kDescriptorDim + j)] *
                       (descriptor[static_cast<size_t>(j)] - center[j]) * weight[j];
            e.data()[static_cast<size_t>(i)] = acc;
        }
        return e;
    }

    Tensor embed_image(const ImageU8& img) const { return embed(style_descriptor(img)); }

  private:
    int64_t d_img_;
    Tensor proj_;
};

// ---------------------------------------------------------------------------
// tensor conversions
// ---------------------------------------------------------------------------

// [0,255] u8 -> [-1,1] scalar, (3, H, W)
inline Tensor image_to_tensor(const ImageU8& img) {
    Tensor t = Tensor::zeros({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x)
                t.data()[static_cast<size_t>((c * img.height + y) * img.width + x)] =
                    static_cast<scalar>(img.at(y, x, c)) / scalar(127.5) - scalar(1);
    return t;
}

// [-1,1] scalar (3, H, W) or (B, 3, H, W) slice -> u8 image
inline ImageU8 tensor_to_image(const Tensor& t, int64_t batch_index = 0) {
    const Shape& s = t.shape();
    int64_t H, W, off;
    if (s.size() == 4) {
        H = s[2];
        W = s[3];
        off = batch_index * 3 * H * W;
    } else {
        H = s[1];
        W = s[2];
        off = 0;
    }
    ImageU8 img;
    img.width = W;
    img.height = H;
    img.rgb.resize(static_cast<size_t>(H * W * 3));
    for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                scalar v = t.data()[static_cast<size_t>(off + (c * H + y) * W + x)];
                v = (std::min(scalar(1), std::max(scalar(-1), v)) + 1) * scalar(127.5);
                img.at(y, x, c) = static_cast<uint8_t>(std::llround(static_cast<double>(v)));
            }
    return img;
}

inline Tensor map_to_tensor(const MapU16& m) {
    Tensor t = Tensor::zeros({1, m.height, m.width});
    for (size_t i = 0; i < m.v.size(); ++i)
        t.data()[i] = static_cast<scalar>(m.v[i]) / scalar(65535);
    return t;
}

// ---------------------------------------------------------------------------
// dataset assembly and disk layout
// ---------------------------------------------------------------------------

struct Dataset {
    int64_t image_size = 32;
    std::vector<SyntheticScene> scenes;
    std::vector<ImageU8> images;
    std::vector<MapU16> maps;
    std::vector<std::vector<scalar>> descriptors;

    int64_t size() const { return static_cast<int64_t>(scenes.size()); }
    int64_t label(int64_t i) const { return static_cast<int64_t>(scenes[static_cast<size_t>(i)].cls); }
};

inline Dataset generate_dataset(int64_t n, uint64_t seed, int64_t image_size = 32) {
    if (n < 1) detail::shape_fail("generate_dataset", "need at least one scene");
    Dataset ds;
    ds.image_size = image_size;
    for (int64_t i = 0; i < n; ++i) {
        uint64_t s = seed;
        const uint64_t mix = splitmix64(s) ^ static_cast<uint64_t>(i) * 0x9e3779b97f4a7c15ull;
        RngStream rng(mix);
        SyntheticScene sc = sample_scene(rng, image_size);
        ImageU8 img = render_scene(sc, image_size);
        ds.scenes.push_back(sc);
        ds.maps.push_back(mask_to_structure_map(scene_mask(sc, image_size), image_size));
        ds.descriptors.push_back(style_descriptor(img));
        ds.images.push_back(std::move(img));
    }
    return ds;
}

namespace detail {
inline std::string scene_stem(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05lld", static_cast<long long>(i));
    return buf;
}
}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream manifest(dir + "/scenes.csv");
    if (!manifest) throw IoError("cannot write dataset manifest in " + dir);
    manifest << "index,class,palette,texture,background,cx,cy,size\n";
    char line[256];
    for (int64_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.scenes[static_cast<size_t>(i)];
        const std::string stem = dir + "/" + detail::scene_stem(i);
        write_ppm(stem + ".ppm", ds.images[static_cast<size_t>(i)]);
        write_pgm16(stem + "_structure.pgm", ds.maps[static_cast<size_t>(i)]);
        save_tensor_file(stem + "_style.cltn",
                         Tensor::from_data({kDescriptorDim}, ds.descriptors[static_cast<size_t>(i)]));
        std::snprintf(line, sizeof(line), "%lld,%d,%d,%d,%d,%.17g,%.17g,%.17g\n", static_cast<long long>(i),
                      static_cast<int>(s.cls), s.palette, s.texture, s.background, s.cx, s.cy, s.size);
        manifest << line;
    }
}

inline Dataset load_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/scenes.csv");
    if (!manifest) throw IoError("dataset manifest not found: " + dir + "/scenes.csv");
    std::string header;
    std::getline(manifest, header);
    Dataset ds;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        SyntheticScene s;
        long long idx;
        int cls;
        if (std::sscanf(line.c_str(), "%lld,%d,%d,%d,%d,%lg,%lg,%lg", &idx, &cls, &s.palette, &s.texture,
                        &s.background, &s.cx, &s.cy, &s.size) != 8)
            throw IoError("bad manifest line: " + line);
        s.cls = static_cast<ShapeClass>(cls);
        const std::string stem = dir + "/" + detail::scene_stem(idx);
        ds.scenes.push_back(s);
        ds.images.push_back(read_ppm(stem + ".ppm"));
        ds.maps.push_back(read_pgm16(stem + "_structure.pgm"));
        Tensor d = load_tensor_file(stem + "_style.cltn");
        ds.descriptors.push_back(d.data());
    }
    if (ds.scenes.empty()) throw IoError("empty dataset in " + dir);
    ds.image_size = ds.images[0].width;
    return ds;
}

}  // namespace clora
