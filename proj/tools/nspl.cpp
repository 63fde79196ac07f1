// Command-line front end: train, render, eval, check, gen-toy.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nspl/checks.hpp"
#include "nspl/metrics.hpp"
#include "nspl/oracle.hpp"
#include "nspl/parallel.hpp"
#include "nspl/scene_io.hpp"
#include "nspl/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nspl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

RenderConfig render_config(int threads, bool deterministic) {
  RenderConfig rc;
  rc.threads = threads;
  rc.deterministic = deterministic;
  return rc;
}

std::vector<std::size_t> pick_split(const Dataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "test") return d.test;
  if (split == "all") {
    std::vector<std::size_t> all(d.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw UsageError("unknown split '" + split + "' (train, test, all)");
}

std::string frame_file_name(const std::string& camera_name, const std::string& ext) {
  std::string s = camera_name;
  for (char& c : s) {
    if (c == '/' || c == '\\') c = '_';
  }
  const fs::path p(s);
  return (p.has_extension() ? p.stem().string() : s) + ext;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, out, points, preset = "auto";
  int iters = -1;
  int budget = 0;
  bool no_densify = false;
  int downscale = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> config;
  bool deterministic = false;
  bool temporal = false;
  int threads = 0;
  int log_interval = -1;
};

void apply_overrides(TrainConfig& tc, const std::vector<std::string>& items) {
  for (const std::string& item : items) {
    if (fs::is_regular_file(item)) {
      std::ifstream in(item);
      json j;
      try {
        in >> j;
      } catch (const std::exception& e) {
        throw UsageError("--config " + item + ": " + e.what());
      }
      if (!j.is_object()) throw UsageError("--config " + item + ": expected a JSON object");
      for (const auto& [k, v] : j.items()) tc.set(k, v.is_string() ? v.get<std::string>() : v.dump());
      continue;
    }
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--config expects key=value or a JSON file, got '" + item + "'");
    tc.set(item.substr(0, eq), item.substr(eq + 1));
  }
}

int cmd_train(const TrainArgs& a) {
  LoadOptions lo;
  lo.downscale = a.downscale;
  const Dataset data = load_dataset(a.data, lo);
  if (data.train.empty()) throw UsageError("dataset has no training views");

  const bool blender = fs::exists(fs::path(a.data) / "transforms_train.json");
  TrainConfig tc;
  if (a.preset == "blender" || (a.preset == "auto" && blender)) {
    tc = TrainConfig::blender();
  } else if (a.preset == "real" || a.preset == "auto") {
    tc = TrainConfig::real_scene();
  } else {
    throw UsageError("unknown preset '" + a.preset + "' (auto, real, blender)");
  }
  tc.rng_seed = a.seed;
  if (a.iters >= 0) tc.iterations = a.iters;
  if (a.log_interval >= 0) tc.log_interval = a.log_interval;
  apply_overrides(tc, a.config);
  if (a.no_densify || a.budget > 0) tc.densify = false;
  if (tc.densify) {
    tc.densify_end = std::min(tc.densify_end, tc.iterations);
    if (tc.densify_start >= tc.densify_end) {
      std::cerr << "note: densification window is empty for " << tc.iterations << " iterations; disabled\n";
      tc.densify = false;
    }
  }
  tc.validate();

  std::vector<Vec3> points;
  fs::path points_path = a.points;
  if (points_path.empty() && fs::exists(fs::path(a.data) / "points.ply")) points_path = fs::path(a.data) / "points.ply";
  if (!points_path.empty()) {
    points = load_points(points_path);
  } else {
    // No point cloud: fill a ball inside the camera rig.
    std::vector<Vec3> centers;
    for (const auto& c : data.cameras) centers.push_back(c.position());
    const Sphere rig = min_enclosing_sphere(centers);
    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = a.budget > 0 ? std::size_t(a.budget) : 5000;
    const double r = data.extent / 3.0;
    while (points.size() < n) {
      const Vec3 v(u(rng), u(rng), u(rng));
      if (v.squaredNorm() <= 1.0) points.push_back(rig.center + r * v);
    }
    std::cerr << "note: no point cloud given; using " << n << " random points\n";
  }
  if (a.budget > 0) {
    if (points.size() < std::size_t(a.budget)) {
      throw UsageError("--budget " + std::to_string(a.budget) + " exceeds the " + std::to_string(points.size()) +
                       " available points");
    }
    points = subsample_points(points, std::size_t(a.budget), a.seed);
  }

  PrimitiveConfig pc;
  pc.temporal = a.temporal;
  InitConfig ic;
  ic.extent = data.extent;
  ic.seed = a.seed;
  ic.background = data.background;
  Scene init = init_scene(points, pc, ic);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_checkpoint(init, out / "init.nspl");
  const fs::path log_path = out / "metrics.jsonl";
  fs::remove(log_path);

  TrainOptions opts;
  opts.render = render_config(a.threads, a.deterministic);
  opts.metrics_log = log_path;
  opts.checkpoint_dir = out / "checkpoints";
  opts.on_log = [](const LogRecord& r) {
    std::fprintf(stderr, "%s iter %6d  loss %.5f  l1 %.5f  psnr %.3f dB  prims %zu  %.1f s\n",
                 r.final ? "final" : "     ", r.iter, r.loss, r.l1, r.psnr_train, r.n_primitives, r.wall_ms / 1e3);
  };
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res = train(data, std::move(init), tc, opts);
  save_checkpoint(res.scene, out / "final.nspl");

  const LogRecord& last = res.log.back();
  json j = {{"checkpoint", (out / "final.nspl").string()},
            {"iterations", tc.iterations},
            {"n_primitives", res.scene.size()},
            {"parameter_count", res.scene.parameter_count()},
            {"population_events", res.population_events},
            {"skipped_nonfinite", res.skipped_nonfinite},
            {"psnr_train", last.psnr_train},
            {"loss", last.loss},
            {"wall_ms", ms_since(t0)}};
  std::cout << j.dump(2) << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
  std::string checkpoint, data, cameras, out, split = "test";
  int downscale = 1;
  bool raw = false;
  bool deterministic = false;
  int threads = 0;
};

int cmd_render(const RenderArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint not found: " + a.checkpoint);
  const Scene scene = load_checkpoint(a.checkpoint);
  std::vector<Camera> cams;
  if (!a.cameras.empty()) {
    cams = read_camera_file(a.cameras);
    if (a.downscale > 1) {
      for (auto& c : cams) c = c.downscaled(a.downscale);
    }
  } else if (!a.data.empty()) {
    LoadOptions lo;
    lo.downscale = a.downscale;
    const Dataset d = load_dataset(a.data, lo);
    for (std::size_t i : pick_split(d, a.split)) cams.push_back(d.cameras[i]);
  } else {
    throw UsageError("render needs --data or --cameras");
  }
  if (cams.empty()) throw UsageError("no cameras to render");

  const fs::path out(a.out);
  fs::create_directories(out);
  const RenderConfig rc = render_config(a.threads, a.deterministic);
  json frames = json::array();
  double total_ms = 0.0;
  for (const Camera& cam : cams) {
    const auto t0 = std::chrono::steady_clock::now();
    const RenderOutput r = render(scene, cam, rc);
    const double ms = ms_since(t0);
    total_ms += ms;
    const fs::path png = out / frame_file_name(cam.name, ".png");
    write_png(png, r.color);
    if (a.raw) write_raw(out / frame_file_name(cam.name, ".nsrf"), r.color);
    frames.push_back({{"camera", cam.name}, {"file", png.string()}, {"ms", ms}});
  }
  const double per_frame = total_ms / double(cams.size());
  std::cerr << "rendered " << cams.size() << " frames, " << per_frame << " ms/frame\n";
  std::cout << json{{"frames", frames}, {"ms_per_frame", per_frame}}.dump(2) << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint, data, out, split = "test";
  int downscale = 1;
  bool deterministic = false;
  int threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint not found: " + a.checkpoint);
  const Scene scene = load_checkpoint(a.checkpoint);
  LoadOptions lo;
  lo.downscale = a.downscale;
  const Dataset d = load_dataset(a.data, lo);
  const auto views = pick_split(d, a.split);
  if (views.empty()) throw UsageError("the " + a.split + " split is empty");

  const RenderConfig rc = render_config(a.threads, a.deterministic);
  json images = json::array();
  double sum_psnr = 0.0, sum_ssim = 0.0, sum_ms = 0.0;
  for (std::size_t i : views) {
    const auto t0 = std::chrono::steady_clock::now();
    const Image img = render(scene, d.cameras[i], rc).color;
    const double ms = ms_since(t0);
    const double p = psnr(img, d.images[i]), s = ssim(img, d.images[i]);
    sum_psnr += p;
    sum_ssim += s;
    sum_ms += ms;
    images.push_back({{"camera", d.cameras[i].name}, {"psnr", p}, {"ssim", s}, {"ms", ms}});
  }
  const double n = double(views.size());
  json report = {{"split", a.split},
                 {"images", images},
                 {"mean_psnr", sum_psnr / n},
                 {"mean_ssim", sum_ssim / n},
                 {"n_primitives", scene.size()},
                 {"parameter_count", scene.parameter_count()},
                 {"checkpoint_bytes", fs::file_size(a.checkpoint)},
                 {"ms_per_frame", sum_ms / n}};

  std::fprintf(stderr, "%-28s %10s %8s\n", "camera", "PSNR", "SSIM");
  for (const auto& im : images) {
    std::fprintf(stderr, "%-28s %10.4f %8.5f\n", im["camera"].get<std::string>().c_str(), im["psnr"].get<double>(),
                 im["ssim"].get<double>());
  }
  std::fprintf(stderr, "%-28s %10.4f %8.5f\n", "mean", sum_psnr / n, sum_ssim / n);
  std::fprintf(stderr, "primitives %zu  parameters %zu  checkpoint %ju bytes  %.2f ms/frame\n", scene.size(),
               scene.parameter_count(), std::uintmax_t(fs::file_size(a.checkpoint)), sum_ms / n);

  const std::string text = report.dump(2);
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << text << '\n';
    if (!f) throw std::runtime_error("cannot write " + a.out);
  }
  std::cout << text << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckArgs {
  std::string suite = "all";
  std::uint64_t seed = 0;
  std::size_t cases = 10000;
  double tol = -1.0;
  int samples = 4096;
  int resolution = 0;
  int primitives = 0;
  int threads = 0;
};

json report_json(const CheckReport& r) {
  json j = {{"suite", r.name},
            {"passed", r.passed},
            {"cases", r.cases},
            {"failures", r.failures},
            {"worst_error", r.worst_error},
            {"worst_case", r.worst_case},
            {"seconds", r.seconds}};
  if (!r.failure_details.empty()) j["failing_cases"] = r.failure_details;
  for (const auto& [k, v] : r.extras) j[k] = v;
  return j;
}

int cmd_check(const CheckArgs& a) {
  const std::vector<std::string> known = {"integrals", "gradients", "render-oracle", "properties", "temporal", "all"};
  if (std::find(known.begin(), known.end(), a.suite) == known.end()) {
    throw UsageError("unknown check suite '" + a.suite + "' (integrals, gradients, render-oracle, properties, "
                     "temporal, all)");
  }
  const bool all = a.suite == "all";
  std::vector<CheckReport> reports;
  if (all || a.suite == "integrals") {
    IntegralCheckOptions o;
    o.seed = a.seed;
    o.cases = a.cases;
    if (a.tol > 0) o.tolerance = a.tol;
    reports.push_back(check_integrals(o));
  }
  if (all || a.suite == "properties") {
    PropertyCheckOptions o;
    o.seed = a.seed;
    o.cases = a.cases;
    reports.push_back(check_integral_properties(o));
  }
  if (all || a.suite == "gradients") {
    GradientCheckOptions o;
    o.seed = a.seed;
    if (a.tol > 0) o.tolerance = a.tol;
    if (a.resolution > 0) o.resolution = a.resolution;
    if (a.primitives > 0) o.primitives = a.primitives;
    reports.push_back(check_gradients(o));
  }
  if (all || a.suite == "render-oracle") {
    RenderOracleOptions o;
    o.seed = a.seed;
    o.samples = a.samples;
    o.threads = a.threads;
    if (a.tol > 0) o.tolerance = a.tol;
    if (a.resolution > 0) o.resolution = a.resolution;
    if (a.primitives > 0) o.primitives = a.primitives;
    reports.push_back(check_render_oracle(o));
  }
  if (all || a.suite == "temporal") {
    TemporalCheckOptions o;
    o.seed = a.seed;
    reports.push_back(check_temporal(o));
  }

  bool ok = true;
  json out = json::array();
  std::fprintf(stderr, "%-20s %-6s %8s %9s %14s %9s\n", "suite", "result", "cases", "failures", "worst", "seconds");
  for (const auto& r : reports) {
    ok = ok && r.passed;
    out.push_back(report_json(r));
    std::fprintf(stderr, "%-20s %-6s %8zu %9zu %14.6g %9.2f\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.cases,
                 r.failures, r.worst_error, r.seconds);
    for (const auto& f : r.failure_details) std::fprintf(stderr, "  replay: %s\n", f.c_str());
  }
  std::cout << json{{"passed", ok}, {"suites", out}}.dump(2) << std::endl;
  return ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// gen-toy

struct GenToyArgs {
  std::string shape = "sphere", out;
  int views = 8;
  int resolution = 128;
  std::uint64_t seed = 0;
};

int cmd_gen_toy(const GenToyArgs& a) {
  AnalyticDensity shape;
  try {
    shape = AnalyticDensity::from_tag(a.shape);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const ToyDataset toy = gen_toy_dataset(shape, a.views, a.resolution, a.seed);
  write_dataset(a.out, toy.data);
  write_points_ply(fs::path(a.out) / "points.ply", toy.points);
  json j = {{"out", a.out},
            {"views", toy.data.size()},
            {"train", toy.data.train.size()},
            {"test", toy.data.test.size()},
            {"resolution", a.resolution},
            {"points", toy.points.size()},
            {"extent", toy.data.extent}};
  std::cerr << "wrote " << toy.data.size() << " views of '" << a.shape << "' to " << a.out << "\n";
  std::cout << j.dump(2) << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural splatting primitives: train, render, evaluate and verify"};
  app.require_subcommand(1);
  int threads = 0;
  const auto add_threads = [&threads](CLI::App* cmd) {
    cmd->add_option("--threads", threads, "Worker threads (default: $NSPL_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
  };
  add_threads(&app);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Optimize primitives against a dataset");
  train_cmd->add_option("--data", ta.data, "Dataset directory")->required();
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--iters", ta.iters, "Iterations (default from preset)")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--points", ta.points, "Initialization points (PLY or xyz)");
  train_cmd->add_option("--budget", ta.budget, "Fixed primitive count; disables densification")
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--no-densify", ta.no_densify, "Disable densification and pruning");
  train_cmd->add_option("--downscale", ta.downscale, "Integer image downscale")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", ta.seed, "RNG seed");
  train_cmd->add_option("--config", ta.config, "TrainConfig override key=value or JSON file (repeatable)");
  train_cmd->add_flag("--deterministic", ta.deterministic, "Thread-count independent gradient reduction");
  train_cmd->add_flag("--temporal", ta.temporal, "Dynamic primitives driven by camera time");
  train_cmd->add_option("--preset", ta.preset, "auto, real or blender");
  train_cmd->add_option("--log-interval", ta.log_interval, "Iterations between log records");

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "Render a checkpoint");
  render_cmd->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
  render_cmd->add_option("--data", ra.data, "Dataset directory supplying cameras");
  render_cmd->add_option("--cameras", ra.cameras, "Camera text file");
  render_cmd->add_option("--split", ra.split, "train, test or all (with --data)");
  render_cmd->add_option("--out", ra.out, "Output directory")->required();
  render_cmd->add_option("--downscale", ra.downscale, "Integer downscale")->check(CLI::PositiveNumber);
  render_cmd->add_flag("--raw", ra.raw, "Also write raw float images");
  render_cmd->add_flag("--deterministic", ra.deterministic, "Deterministic reduction");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ea.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ea.split, "train, test or all");
  eval_cmd->add_option("--downscale", ea.downscale, "Integer downscale")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", ea.out, "Also write the JSON report here");
  eval_cmd->add_flag("--deterministic", ea.deterministic, "Deterministic reduction");

  CheckArgs ca;
  auto* check_cmd = app.add_subcommand("check", "Run oracle suites");
  check_cmd->add_option("suite", ca.suite, "integrals, gradients, render-oracle, properties, temporal or all");
  check_cmd->add_option("--seed", ca.seed, "Case generator seed");
  check_cmd->add_option("--cases", ca.cases, "Random cases for the integral suites");
  check_cmd->add_option("--tol", ca.tol, "Override the suite tolerance");
  check_cmd->add_option("--samples", ca.samples, "Ray-march samples for render-oracle")->check(CLI::Range(2, 1 << 24));
  check_cmd->add_option("--resolution", ca.resolution, "Image size for gradients/render-oracle");
  check_cmd->add_option("--primitives", ca.primitives, "Primitive count for gradients/render-oracle");

  GenToyArgs ga;
  auto* gen_cmd = app.add_subcommand("gen-toy", "Generate a synthetic dataset from an analytic solid");
  gen_cmd->add_option("--shape", ga.shape, "sphere, box, torus or union");
  gen_cmd->add_option("--views", ga.views, "Number of views")->check(CLI::Range(2, 100000));
  gen_cmd->add_option("--res", ga.resolution, "Square image size")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", ga.seed, "Seed");
  gen_cmd->add_option("--out", ga.out, "Output directory")->required();

  for (auto* cmd : {train_cmd, render_cmd, eval_cmd, check_cmd, gen_cmd}) add_threads(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    ta.threads = ra.threads = ea.threads = ca.threads = threads;
    if (*train_cmd) return cmd_train(ta);
    if (*render_cmd) return cmd_render(ra);
    if (*eval_cmd) return cmd_eval(ea);
    if (*check_cmd) return cmd_check(ca);
    if (*gen_cmd) return cmd_gen_toy(ga);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
