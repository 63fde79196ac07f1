#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nspl/camera.hpp"
#include "nspl/checks.hpp"
#include "nspl/image.hpp"
#include "nspl/metrics.hpp"
#include "nspl/oracle.hpp"
#include "nspl/scene_io.hpp"
#include "nspl/training.hpp"

namespace py = pybind11;
using namespace nspl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Image& img) {
  Array out({img.height, img.width, 3});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

Image from_array(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected an (H, W, 3) array");
  Image img(int(a.shape(1)), int(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::dict report_dict(const CheckReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["passed"] = r.passed;
  d["cases"] = r.cases;
  d["failures"] = r.failures;
  d["worst_error"] = r.worst_error;
  d["worst_case"] = r.worst_case;
  d["seconds"] = r.seconds;
  py::dict extras;
  for (const auto& [k, v] : r.extras) extras[py::str(k)] = v;
  d["extras"] = extras;
  d["failure_details"] = r.failure_details;
  return d;
}

std::vector<Vec3> points_from(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an (N, 3) array of points");
  std::vector<Vec3> pts(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[i] = Vec3(a.at(i, 0), a.at(i, 1), a.at(i, 2));
  return pts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ellipsoid-bounded neural density primitives: rendering, training and verification";

  py::class_<PrimitiveConfig>(m, "PrimitiveConfig")
      .def(py::init<>())
      .def_readwrite("hidden", &PrimitiveConfig::hidden)
      .def_readwrite("omega", &PrimitiveConfig::omega)
      .def_readwrite("sh_degree", &PrimitiveConfig::sh_degree)
      .def_readwrite("temporal", &PrimitiveConfig::temporal)
      .def_readwrite("poly_order", &PrimitiveConfig::poly_order)
      .def_readwrite("fourier_order", &PrimitiveConfig::fourier_order)
      .def_property_readonly("record_size", [](const PrimitiveConfig& c) { return ParamLayout(c).size; });

  py::class_<Ray>(m, "Ray")
      .def(py::init(&Ray::make), py::arg("origin"), py::arg("direction"), py::arg("t_near") = 0.0,
           py::arg("t_far") = 1e4)
      .def_readonly("origin", &Ray::origin)
      .def_readonly("direction", &Ray::direction)
      .def_readonly("t_near", &Ray::t_near)
      .def_readonly("t_far", &Ray::t_far);

  py::class_<Ellipsoid>(m, "Ellipsoid")
      .def(py::init(&Ellipsoid::make), py::arg("center"), py::arg("scale"), py::arg("rotation"))
      .def_readwrite("center", &Ellipsoid::center)
      .def_readwrite("scale", &Ellipsoid::scale)
      .def_readwrite("rotation", &Ellipsoid::rotation);

  m.def(
      "intersect",
      [](const Ellipsoid& e, const Ray& r) -> std::optional<std::pair<double, double>> {
        const auto hit = intersect(e, r);
        if (!hit) return std::nullopt;
        return std::make_pair(hit->t_in, hit->t_out);
      },
      "Entry and exit distance of the ray inside the ellipsoid, or None");

  py::class_<NeuralPrimitive>(m, "Primitive")
      .def(py::init([] { return NeuralPrimitive::zeros({}); }))
      .def(py::init([](const PrimitiveConfig& c) { return NeuralPrimitive::zeros(c); }), py::arg("config"))
      .def_property(
          "geometry", [](const NeuralPrimitive& p) { return p.geometry; },
          [](NeuralPrimitive& p, const Ellipsoid& e) { p.geometry = e; })
      .def_property(
          "params",
          [](const NeuralPrimitive& p) {
            const ParamLayout l(p.config());
            std::vector<double> rec(l.size);
            pack(p, l, rec);
            return rec;
          },
          [](NeuralPrimitive& p, const std::vector<double>& rec) {
            const PrimitiveConfig c = p.config();
            const ParamLayout l(c);
            if (int(rec.size()) != l.size) throw std::invalid_argument("record has the wrong length");
            p = unpack(c, l, rec);
          },
          "Flat record: center, scale, rotation, W1, b1, W2, b2, SH (then temporal blocks)")
      .def("density", [](const NeuralPrimitive& p, const Vec3& x) { return density(p, x); })
      .def("line_integral", [](const NeuralPrimitive& p, const Ray& r, double t_in, double t_out,
                               double xi) { return line_integral(p, r, t_in, t_out, xi); },
           py::arg("ray"), py::arg("t_in"), py::arg("t_out"), py::arg("xi") = 0.0)
      .def("quad_integral", [](const NeuralPrimitive& p, const Ray& r, double t_in, double t_out,
                               double xi) { return quad_integral(p, r, t_in, t_out, {}, xi); },
           py::arg("ray"), py::arg("t_in"), py::arg("t_out"), py::arg("xi") = 0.0)
      .def("kernel", [](const NeuralPrimitive& p, const Ray& r, double xi) { return kernel(p, r, xi); },
           py::arg("ray"), py::arg("xi") = 0.0);

  py::class_<Scene>(m, "Scene")
      .def(py::init<>())
      .def_readwrite("config", &Scene::config)
      .def_readwrite("primitives", &Scene::primitives)
      .def_readwrite("background", &Scene::background)
      .def_readwrite("extent", &Scene::extent)
      .def("__len__", &Scene::size)
      .def_property_readonly("parameter_count", &Scene::parameter_count)
      .def("flatten", [](const Scene& s) {
        const auto flat = s.flatten();
        Array out({py::ssize_t(s.size()), py::ssize_t(s.layout().size)});
        std::copy(flat.begin(), flat.end(), out.mutable_data());
        return out;
      });

  py::class_<Camera>(m, "Camera")
      .def(py::init<>())
      .def_readwrite("name", &Camera::name)
      .def_readwrite("rotation", &Camera::rotation)
      .def_readwrite("translation", &Camera::translation)
      .def_readwrite("fx", &Camera::fx)
      .def_readwrite("fy", &Camera::fy)
      .def_readwrite("cx", &Camera::cx)
      .def_readwrite("cy", &Camera::cy)
      .def_readwrite("width", &Camera::width)
      .def_readwrite("height", &Camera::height)
      .def_readwrite("time", &Camera::time)
      .def("downscaled", &Camera::downscaled);

  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"), py::arg("up"), py::arg("fx"), py::arg("fy"),
        py::arg("width"), py::arg("height"));

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("cameras", &Dataset::cameras)
      .def_readonly("train", &Dataset::train)
      .def_readonly("test", &Dataset::test)
      .def_readonly("extent", &Dataset::extent)
      .def_readonly("background", &Dataset::background)
      .def("__len__", &Dataset::size)
      .def("image", [](const Dataset& d, std::size_t i) { return to_array(d.images.at(i)); });

  m.def(
      "load_dataset",
      [](const std::filesystem::path& dir, int downscale) { return load_dataset(dir, {downscale, std::nullopt}); },
      py::arg("path"), py::arg("downscale") = 1);

  m.def(
      "render",
      [](const Scene& s, const Camera& cam, int threads, bool clamp) {
        RenderConfig cfg;
        cfg.threads = threads;
        cfg.clamp_output = clamp;
        Image img;
        {
          py::gil_scoped_release release;
          img = render(s, cam, cfg).color;
        }
        return to_array(img);
      },
      py::arg("scene"), py::arg("camera"), py::arg("threads") = 0, py::arg("clamp") = true,
      "Renders to an (H, W, 3) float array of linear RGB");

  m.def("save_checkpoint", &save_checkpoint);
  m.def("load_checkpoint", &load_checkpoint);
  m.def("write_png", [](const std::filesystem::path& p, const Array& a) { write_png(p, from_array(a)); });
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(from_array(a), from_array(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(from_array(a), from_array(b)); });

  m.def(
      "init_scene",
      [](const Array& points, const PrimitiveConfig& cfg, double extent, std::uint64_t seed) {
        InitConfig ic;
        ic.extent = extent;
        ic.seed = seed;
        return init_scene(points_from(points), cfg, ic);
      },
      py::arg("points"), py::arg("config") = PrimitiveConfig{}, py::arg("extent") = 1.0, py::arg("seed") = 0);

  m.def(
      "train",
      [](const Dataset& data, const Scene& init, const std::map<std::string, std::string>& overrides,
         const std::string& preset, int threads) {
        TrainConfig cfg = preset == "blender" ? TrainConfig::blender() : TrainConfig::real_scene();
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        TrainOptions opts;
        opts.render.threads = threads;
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(data, init, cfg, opts);
        }
        py::list log;
        for (const auto& r : res.log) {
          py::dict d;
          d["iter"] = r.iter;
          d["loss"] = r.loss;
          d["l1"] = r.l1;
          d["psnr_train"] = r.psnr_train;
          d["n_primitives"] = r.n_primitives;
          d["final"] = r.final;
          log.append(d);
        }
        return py::make_tuple(res.scene, log);
      },
      py::arg("data"), py::arg("init"), py::arg("config") = std::map<std::string, std::string>{},
      py::arg("preset") = "real", py::arg("threads") = 0,
      "Returns (scene, log). `config` maps TrainConfig keys to textual values");

  m.def(
      "gen_toy",
      [](const std::string& shape, int views, int resolution, std::uint64_t seed,
         const std::optional<std::filesystem::path>& out) {
        ToyDataset toy = gen_toy_dataset(AnalyticDensity::from_tag(shape), views, resolution, seed);
        if (out) {
          write_dataset(*out, toy.data);
          write_points_ply(*out / "points.ply", toy.points);
        }
        Array pts({py::ssize_t(toy.points.size()), py::ssize_t(3)});
        for (std::size_t i = 0; i < toy.points.size(); ++i)
          for (int j = 0; j < 3; ++j) pts.mutable_at(i, j) = toy.points[i][j];
        return py::make_tuple(std::move(toy.data), pts);
      },
      py::arg("shape") = "sphere", py::arg("views") = 8, py::arg("resolution") = 128, py::arg("seed") = 0,
      py::arg("out") = std::nullopt, "Returns (dataset, points); writes them to `out` when given");

  m.def(
      "check",
      [](const std::string& suite, std::uint64_t seed, std::size_t cases) {
        CheckReport r;
        py::gil_scoped_release release;
        if (suite == "integrals") {
          IntegralCheckOptions o;
          o.seed = seed;
          if (cases) o.cases = cases;
          r = check_integrals(o);
        } else if (suite == "properties") {
          PropertyCheckOptions o;
          o.seed = seed;
          if (cases) o.cases = cases;
          r = check_integral_properties(o);
        } else if (suite == "gradients") {
          GradientCheckOptions o;
          o.seed = seed;
          r = check_gradients(o);
        } else if (suite == "render-oracle") {
          RenderOracleOptions o;
          o.seed = seed;
          r = check_render_oracle(o);
        } else if (suite == "temporal") {
          TemporalCheckOptions o;
          o.seed = seed;
          if (cases) o.integral_cases = cases;
          r = check_temporal(o);
        } else {
          throw std::invalid_argument("unknown suite '" + suite + "'");
        }
        py::gil_scoped_acquire acquire;
        return report_dict(r);
      },
      py::arg("suite"), py::arg("seed") = 0, py::arg("cases") = 0);
}
