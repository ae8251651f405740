// Python bindings for the main depth-completion operations. Arrays cross the
// boundary as numpy float64; depth maps use the 0-means-invalid convention.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gacnet/ops.hpp"
#include "gacnet/pyramid.hpp"
#include "gacnet/train.hpp"

namespace py = pybind11;
using namespace gacnet;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Tensor t;
    t.shape.assign(a.ndim(), 0);
    for (py::ssize_t i = 0; i < a.ndim(); ++i) t.shape[size_t(i)] = int(a.shape(i));
    t.data.assign(a.data(), a.data() + a.size());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

SparseDepthMap sparse_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("depth map must be 2-D");
    SparseDepthMap s(int(a.shape(0)), int(a.shape(1)));
    s.values.assign(a.data(), a.data() + a.size());
    return s;
}

py::array_t<double> array_from_values(const std::vector<double>& v, int h, int w) {
    py::array_t<double> a({py::ssize_t(h), py::ssize_t(w)});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

Frame frame_from_arrays(const py::array_t<double>& image, const py::array_t<double>& sparse,
                        const py::array_t<double>& gt, double fx, double fy, double cx,
                        double cy) {
    Frame f;
    f.image = tensor_from_array(image);
    f.sparse = sparse_from_array(sparse);
    f.gt = sparse_from_array(gt);
    f.intr = {fx, fy, cx, cy, f.sparse.w, f.sparse.h};
    return f;
}

}  // namespace

PYBIND11_MODULE(_gacnet, m) {
    m.doc() = "depth completion core: geometry, propagation, refinement, training";

    py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
                 return CameraIntrinsics{fx, fy, cx, cy, width, height};
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width") = 0,
             py::arg("height") = 0)
        .def_readwrite("fx", &CameraIntrinsics::fx)
        .def_readwrite("fy", &CameraIntrinsics::fy)
        .def_readwrite("cx", &CameraIntrinsics::cx)
        .def_readwrite("cy", &CameraIntrinsics::cy);

    m.def("back_project",
          [](const py::array_t<double>& depth, const CameraIntrinsics& intr) {
              PointCloud pc = back_project(sparse_from_array(depth), intr);
              py::array_t<double> out({py::ssize_t(pc.size()), py::ssize_t(3)});
              auto* p = out.mutable_data();
              for (size_t i = 0; i < pc.size(); ++i)
                  for (int k = 0; k < 3; ++k) p[3 * i + size_t(k)] = pc.points[i][size_t(k)];
              return out;
          },
          py::arg("depth"), py::arg("intrinsics"),
          "Back-project valid pixels of a sparse depth map to Nx3 camera-frame points");

    m.def("farthest_point_sample",
          [](const py::array_t<double>& points, int m2, uint64_t seed) {
              auto a = py::array_t<double, py::array::c_style | py::array::forcecast>(points);
              if (a.ndim() != 2 || a.shape(1) != 3)
                  throw std::invalid_argument("points must be Nx3");
              PointCloud pc;
              for (py::ssize_t i = 0; i < a.shape(0); ++i)
                  pc.points.push_back({a.data()[3 * i], a.data()[3 * i + 1], a.data()[3 * i + 2]});
              return farthest_point_sample(pc, m2, seed);
          },
          py::arg("points"), py::arg("m"), py::arg("seed") = 0);

    m.def("normalize_affinity",
          [](const py::array_t<double>& raw) {
              Tape t;
              return array_from_tensor(
                  t.val(ops::normalize_affinity(t, t.constant(tensor_from_array(raw)))));
          },
          py::arg("raw"), "[J,H,W] raw affinities -> [J+1,H,W] normalized kernel");

    m.def("propagate_step",
          [](const py::array_t<double>& d, const py::array_t<double>& nk, int kernel_size) {
              Tape t;
              VarId out = ops::propagate_step(t, t.constant(tensor_from_array(d)),
                                              t.constant(tensor_from_array(nk)),
                                              kernel_offsets(kernel_size));
              return array_from_tensor(t.val(out));
          },
          py::arg("depth"), py::arg("normalized_kernel"), py::arg("kernel_size"));

    m.def("apply_sparse_constraint",
          [](const py::array_t<double>& d, const py::array_t<double>& sparse,
             const py::array_t<double>& gamma_masked) {
              Tape t;
              VarId out = apply_sparse_constraint(t, t.constant(tensor_from_array(d)),
                                                  sparse_from_array(sparse),
                                                  t.constant(tensor_from_array(gamma_masked)));
              return array_from_tensor(t.val(out));
          },
          py::arg("depth"), py::arg("sparse"), py::arg("gamma_masked"));

    m.def("nearest_valid_fill", [](const py::array_t<double>& sparse) {
        SparseDepthMap s = sparse_from_array(sparse);
        DenseDepthMap d = nearest_valid_fill(s);
        return array_from_values(d.values, d.h, d.w);
    });

    m.def("compute_metrics", [](const py::array_t<double>& pred, const py::array_t<double>& gt) {
        SparseDepthMap g = sparse_from_array(gt);
        auto pa = py::array_t<double, py::array::c_style | py::array::forcecast>(pred);
        DenseDepthMap p(int(pa.shape(0)), int(pa.shape(1)));
        p.values.assign(pa.data(), pa.data() + pa.size());
        MetricReport r = compute_metrics(p, g);
        py::dict d;
        d["rmse_mm"] = r.rmse_mm;
        d["mae_mm"] = r.mae_mm;
        d["irmse_per_km"] = r.irmse_per_km;
        d["imae_per_km"] = r.imae_per_km;
        d["n_valid"] = r.n_valid;
        d["inverse_defined"] = r.inverse_defined;
        return d;
    });

    m.def("lr_at", [](long long step, long long total, double max_lr, double warmup_fraction) {
        TrainConfig cfg;
        cfg.max_lr = max_lr;
        cfg.warmup_fraction = warmup_fraction;
        return lr_at(step, total, cfg);
    },
          py::arg("step"), py::arg("total_steps"), py::arg("max_lr") = 2.5e-4,
          py::arg("warmup_fraction") = 0.10);

    m.def("loss_weights", &loss_weights);

    m.def("generate_scene",
          [](uint64_t seed, int h, int w, int n_objects) {
              SceneSpec spec;
              spec.seed = seed;
              spec.h = h;
              spec.w = w;
              spec.n_objects = n_objects;
              Frame f = generate_scene(spec);
              py::dict d;
              d["image"] = array_from_tensor(f.image);
              d["gt"] = array_from_values(f.gt.values, f.gt.h, f.gt.w);
              d["fx"] = f.intr.fx;
              d["fy"] = f.intr.fy;
              d["cx"] = f.intr.cx;
              d["cy"] = f.intr.cy;
              return d;
          },
          py::arg("seed"), py::arg("h") = 64, py::arg("w") = 64, py::arg("n_objects") = 3);

    m.def("lidar_subsample",
          [](const py::array_t<double>& dense, int lines, double dropout, uint64_t seed) {
              auto a = py::array_t<double, py::array::c_style | py::array::forcecast>(dense);
              DenseDepthMap d(int(a.shape(0)), int(a.shape(1)));
              d.values.assign(a.data(), a.data() + a.size());
              SparseDepthMap s = lidar_subsample(d, lines, dropout, seed);
              return array_from_values(s.values, s.h, s.w);
          },
          py::arg("dense"), py::arg("lines") = 8, py::arg("dropout") = 0.3, py::arg("seed") = 0);

    m.def("load_depth_png", [](const std::string& path) {
        SparseDepthMap s = load_depth_png(path);
        return array_from_values(s.values, s.h, s.w);
    });
    m.def("save_depth_png", [](const py::array_t<double>& depth, const std::string& path) {
        save_depth_png(sparse_from_array(depth), path);
    });

    py::class_<GacNet>(m, "GacNet")
        .def(py::init([](const std::string& config_json, uint64_t seed) {
                 NetworkConfig cfg = config_json.empty() ? NetworkConfig::toy()
                                                         : NetworkConfig::from_json(config_json);
                 cfg.seed = seed;
                 return new GacNet(cfg, seed);
             }),
             py::arg("config_json") = "", py::arg("seed") = 0)
        .def_static("load",
                    [](const std::string& ckpt, const std::string& config_json) {
                        NetworkConfig cfg = config_json.empty()
                                                ? NetworkConfig::toy()
                                                : NetworkConfig::from_json(config_json);
                        return new GacNet(cfg, ParamRegistry::load(ckpt));
                    },
                    py::arg("ckpt"), py::arg("config_json") = "")
        .def("save", [](GacNet& net, const std::string& path) { net.params().save(path); })
        .def("config_json", [](const GacNet& net) { return net.config().to_json(); })
        .def("predict",
             [](GacNet& net, const py::array_t<double>& image, const py::array_t<double>& sparse,
                double fx, double fy, double cx, double cy) {
                 Frame f = frame_from_arrays(image, sparse, sparse, fx, fy, cx, cy);
                 DenseDepthMap d = net.predict(f);
                 return array_from_values(d.values, d.h, d.w);
             },
             py::arg("image"), py::arg("sparse"), py::arg("fx"), py::arg("fy"), py::arg("cx"),
             py::arg("cy"));

    m.def("train_toy",
          [](uint64_t seed, int n_frames, int steps, int batch_size) {
              std::vector<SceneSpec> specs(static_cast<size_t>(n_frames));
              for (int i = 0; i < n_frames; ++i)
                  specs[size_t(i)] = SceneSpec{seed * 1000 + uint64_t(i), 64, 64, 3, 2.0, 10.0,
                                               2.0};
              auto frames = make_synthetic_dataset(specs, {8, 0.3});
              TrainConfig cfg;
              cfg.net = NetworkConfig::toy();
              cfg.seed = seed;
              cfg.total_steps = steps;
              cfg.batch_size = batch_size;
              RunRecord rec = train(cfg, frames, {frames[0]}, "");
              py::dict d;
              d["losses"] = rec.losses;
              d["lr_trace"] = rec.lr_trace;
              d["final_val_rmse_mm"] = rec.val_reports.back().rmse_mm;
              d["wall_seconds"] = rec.wall_seconds;
              return d;
          },
          py::arg("seed") = 0, py::arg("n_frames") = 4, py::arg("steps") = 10,
          py::arg("batch_size") = 1, "small synthetic training run, returns traces");
}
