#include "gacnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <png.h>

namespace gacnet {

namespace {

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, &info);
        if (fp) std::fclose(fp);
    }
};

void open_read(PngReader& r, const std::string& path) {
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw std::runtime_error("cannot open PNG: " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = png_create_info_struct(r.png);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);
}

}  // namespace

SparseDepthMap load_depth_png(const std::string& path) {
    PngReader r;
    open_read(r, path);
    int w = static_cast<int>(png_get_image_width(r.png, r.info));
    int h = static_cast<int>(png_get_image_height(r.png, r.info));
    int depth = png_get_bit_depth(r.png, r.info);
    int color = png_get_color_type(r.png, r.info);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY)
        throw std::runtime_error("depth PNG must be 16-bit single-channel: " + path);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 2);
    SparseDepthMap out(h, w);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            uint16_t v = static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);  // big-endian
            out.at(y, x) = static_cast<double>(v) / 256.0;
        }
    }
    return out;
}

namespace {

void write_depth_png_impl(const std::vector<double>& values, int h, int w,
                          const std::string& path) {
    PngWriter wr;
    wr.fp = std::fopen(path.c_str(), "wb");
    if (!wr.fp) throw std::runtime_error("cannot write PNG: " + path);
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("PNG write error: " + path);
    png_init_io(wr.png, wr.fp);
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double d = values[static_cast<size_t>(y) * w + x];
            double scaled = d * 256.0;
            uint16_t v = d <= 0.0 ? 0
                                  : static_cast<uint16_t>(std::min(
                                        65535.0, std::floor(scaled + 0.5)));  // round half up
            row[2 * x] = static_cast<uint8_t>(v >> 8);
            row[2 * x + 1] = static_cast<uint8_t>(v & 0xff);
        }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

}  // namespace

void save_depth_png(const SparseDepthMap& map, const std::string& path) {
    write_depth_png_impl(map.values, map.h, map.w, path);
}

void save_depth_png(const DenseDepthMap& map, const std::string& path) {
    write_depth_png_impl(map.values, map.h, map.w, path);
}

void save_color_png(const Tensor& rgb, const std::string& path) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw std::invalid_argument("expect [3,H,W] image");
    int h = rgb.dim(1), w = rgb.dim(2);
    PngWriter wr;
    wr.fp = std::fopen(path.c_str(), "wb");
    if (!wr.fp) throw std::runtime_error("cannot write PNG: " + path);
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    wr.info = png_create_info_struct(wr.png);
    if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("PNG write error: " + path);
    png_init_io(wr.png, wr.fp);
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(rgb.at(c, y, x), 0.0, 1.0);
                row[3 * x + c] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

Tensor load_color_png(const std::string& path) {
    PngReader r;
    open_read(r, path);
    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);
    int w = static_cast<int>(png_get_image_width(r.png, r.info));
    int h = static_cast<int>(png_get_image_height(r.png, r.info));
    Tensor out({3, h, w});
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[3 * x + c] / 255.0;
    }
    return out;
}

Frame kitti_crop(const Frame& frame) {
    constexpr int kCrop = 96;
    if (frame.sparse.h != 352 || frame.sparse.w != 1216)
        throw std::invalid_argument("kitti_crop: expected a 1216x352 frame");
    Frame out;
    out.id = frame.id;
    out.intr = frame.intr;
    out.intr.cy -= kCrop;
    out.intr.height = frame.intr.height - kCrop;
    int h = out.intr.height, w = frame.sparse.w;
    out.image = Tensor({3, h, w});
    out.sparse = SparseDepthMap(h, w);
    out.gt = SparseDepthMap(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            out.sparse.at(y, x) = frame.sparse.at(y + kCrop, x);
            out.gt.at(y, x) = frame.gt.at(y + kCrop, x);
            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = frame.image.at(c, y + kCrop, x);
        }
    return out;
}

namespace {

struct Sphere {
    double cx, cy, cz, r;
    double base[3];
};

struct Backdrop {
    double d0, a, b;  // z = d0 + a*x + b*y
    double base[3];
};

}  // namespace

Frame generate_scene(const SceneSpec& spec) {
    if (spec.h <= 0 || spec.w <= 0 || spec.h % 32 != 0 || spec.w % 32 != 0)
        throw std::invalid_argument("generate_scene: H and W must be positive multiples of 32");
    if (spec.depth_min <= 0 || spec.depth_max <= spec.depth_min)
        throw std::invalid_argument("generate_scene: bad depth range");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    Frame f;
    f.id = "syn" + std::to_string(spec.seed);
    f.intr.fx = f.intr.fy = 0.8 * std::max(spec.h, spec.w);
    f.intr.cx = spec.w / 2.0;
    f.intr.cy = spec.h / 2.0;
    f.intr.width = spec.w;
    f.intr.height = spec.h;

    Backdrop bg;
    bg.d0 = spec.depth_max * (0.8 + 0.2 * u01(rng));
    bg.a = 0.25 * (u01(rng) - 0.5);
    bg.b = 0.25 * (u01(rng) - 0.5);
    for (auto& c : bg.base) c = 0.3 + 0.5 * u01(rng);

    std::vector<Sphere> spheres;
    for (int i = 0; i < spec.n_objects; ++i) {
        Sphere s;
        double z = spec.depth_min + (spec.depth_max - spec.depth_min) * (0.2 + 0.6 * u01(rng));
        double half_w = z * spec.w / (2.0 * f.intr.fx);
        double half_h = z * spec.h / (2.0 * f.intr.fy);
        s.cx = (2.0 * u01(rng) - 1.0) * 0.7 * half_w;
        s.cy = (2.0 * u01(rng) - 1.0) * 0.7 * half_h;
        s.cz = z;
        s.r = (0.1 + 0.25 * u01(rng)) * std::min(half_w, half_h);
        for (auto& c : s.base) c = 0.2 + 0.7 * u01(rng);
        spheres.push_back(s);
    }

    f.image = Tensor({3, spec.h, spec.w});
    f.gt = SparseDepthMap(spec.h, spec.w);
    f.sparse = SparseDepthMap(spec.h, spec.w);
    for (int v = 0; v < spec.h; ++v)
        for (int u = 0; u < spec.w; ++u) {
            double dx = (u - f.intr.cx) / f.intr.fx;
            double dy = (v - f.intr.cy) / f.intr.fy;
            // backdrop plane: z = d0 + a*(z*dx) + b*(z*dy)
            double denom = 1.0 - bg.a * dx - bg.b * dy;
            double z = bg.d0 / denom;
            double hit[3] = {z * dx, z * dy, z};
            const double* base = bg.base;
            // ray-sphere intersections; |o + t*d - c|^2 = r^2 with o = 0
            for (const auto& s : spheres) {
                double dd = dx * dx + dy * dy + 1.0;
                double oc[3] = {-s.cx, -s.cy, -s.cz};
                double bq = 2.0 * (dx * oc[0] + dy * oc[1] + oc[2]);
                double cq = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - s.r * s.r;
                double disc = bq * bq - 4.0 * dd * cq;
                if (disc < 0.0) continue;
                double tt = (-bq - std::sqrt(disc)) / (2.0 * dd);
                if (tt > 0.0 && tt < z) {
                    z = tt;
                    hit[0] = tt * dx;
                    hit[1] = tt * dy;
                    hit[2] = tt;
                    base = s.base;
                }
            }
            f.gt.at(v, u) = z;
            double tex = 0.5 + 0.25 * std::sin(spec.texture_freq * 3.0 * hit[0]) *
                                   std::cos(spec.texture_freq * 3.0 * hit[1]) +
                         0.15 * std::sin(spec.texture_freq * 1.7 * hit[2]);
            for (int c = 0; c < 3; ++c)
                f.image.at(c, v, u) = std::clamp(base[c] * tex + 0.1 * c * tex, 0.0, 1.0);
        }
    return f;
}

SparseDepthMap lidar_subsample(const DenseDepthMap& dense, int lines, double dropout,
                               uint64_t seed) {
    if (lines < 1) throw std::invalid_argument("lidar_subsample: lines must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("lidar_subsample: dropout must be in [0,1)");
    SparseDepthMap out(dense.h, dense.w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int n = std::min(lines, dense.h);
    for (int i = 0; i < n; ++i) {
        int row = static_cast<int>((static_cast<long long>(i) * dense.h) / n);
        for (int x = 0; x < dense.w; ++x) {
            if (dropout > 0.0 && u01(rng) < dropout) continue;
            out.at(row, x) = dense.at(row, x);
        }
    }
    return out;
}

Frame load_kitti_frame(const std::string& dir, const std::string& id) {
    Frame f;
    f.id = id;
    f.image = load_color_png(dir + "/image/" + id + ".png");
    f.sparse = load_depth_png(dir + "/velodyne_raw/" + id + ".png");
    f.gt = load_depth_png(dir + "/groundtruth/" + id + ".png");
    std::ifstream in(dir + "/intrinsics/" + id + ".txt");
    if (!in) throw std::runtime_error("missing intrinsics for frame " + id);
    in >> f.intr.fx >> f.intr.fy >> f.intr.cx >> f.intr.cy;
    if (!in) throw std::runtime_error("malformed intrinsics for frame " + id);
    f.intr.width = f.sparse.w;
    f.intr.height = f.sparse.h;
    return f;
}

std::vector<SceneSpec> load_scene_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<SceneSpec> specs;
    for (const auto& e : j) {
        SceneSpec s;
        s.seed = e.value("seed", 0ull);
        s.h = e.value("h", 64);
        s.w = e.value("w", 64);
        s.n_objects = e.value("n_objects", 4);
        s.depth_min = e.value("depth_min", 2.0);
        s.depth_max = e.value("depth_max", 10.0);
        s.texture_freq = e.value("texture_freq", 2.0);
        specs.push_back(s);
    }
    return specs;
}

void save_scene_manifest(const std::vector<SceneSpec>& specs, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : specs)
        j.push_back({{"seed", s.seed},
                     {"h", s.h},
                     {"w", s.w},
                     {"n_objects", s.n_objects},
                     {"depth_min", s.depth_min},
                     {"depth_max", s.depth_max},
                     {"texture_freq", s.texture_freq}});
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
}

std::vector<Frame> make_synthetic_dataset(const std::vector<SceneSpec>& specs,
                                          const SparsifyParams& sp) {
    std::vector<Frame> frames;
    frames.reserve(specs.size());
    for (const auto& spec : specs) {
        Frame f = generate_scene(spec);
        DenseDepthMap dense(f.gt.h, f.gt.w);
        dense.values = f.gt.values;
        f.sparse = lidar_subsample(dense, sp.lines, sp.dropout, spec.seed ^ 0xabcdef12345ull);
        frames.push_back(std::move(f));
    }
    return frames;
}

DenseDepthMap nearest_valid_fill(const SparseDepthMap& sparse) {
    DenseDepthMap out(sparse.h, sparse.w);
    std::vector<std::pair<int, int>> valid;
    for (int y = 0; y < sparse.h; ++y)
        for (int x = 0; x < sparse.w; ++x)
            if (sparse.at(y, x) > 0.0) valid.emplace_back(y, x);
    if (valid.empty()) return out;
    for (int y = 0; y < sparse.h; ++y)
        for (int x = 0; x < sparse.w; ++x) {
            if (sparse.at(y, x) > 0.0) {
                out.at(y, x) = sparse.at(y, x);
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            std::pair<int, int> bp = valid[0];
            for (const auto& [vy, vx] : valid) {
                double d = double(vy - y) * (vy - y) + double(vx - x) * (vx - x);
                if (d < best) {
                    best = d;
                    bp = {vy, vx};
                }
            }
            out.at(y, x) = sparse.at(bp.first, bp.second);
        }
    return out;
}

}  // namespace gacnet
