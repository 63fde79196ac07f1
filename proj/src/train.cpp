#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "json.hpp"

#include "nspl/metrics.hpp"
#include "nspl/scene_io.hpp"
#include "nspl/training.hpp"

namespace nspl {

TrainConfig TrainConfig::real_scene() { return TrainConfig{}; }

TrainConfig TrainConfig::blender() {
  TrainConfig c;
  c.densify_interval = 200;
  c.densify_start = 1000;
  c.densify_end = 20000;
  c.grow_grad_threshold = 1e-5;
  c.prune_grad_threshold = 1e-6;
  return c;
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (iterations < 0) fail("iterations must be >= 0");
  for (double lr : {lr_mlp, lr_means, lr_scales, lr_quats, lr_sh}) {
    if (!(lr > 0.0)) fail("learning rates must be positive");
  }
  if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) fail("ssim_weight must be in [0, 1]");
  if (!(geo_reg_weight >= 0.0)) fail("geo_reg_weight must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (log_interval < 0 || checkpoint_interval < 0) fail("intervals must be >= 0");
  if (densify) {
    if (densify_interval < 1) fail("densify_interval must be >= 1");
    if (!(densify_start < densify_end && densify_end <= iterations)) {
      fail("densification needs densify_start < densify_end <= iterations");
    }
    if (!(prune_grad_threshold <= grow_grad_threshold)) fail("prune threshold exceeds grow threshold");
    if (!(grow_scale_threshold > 0.0 && prune_scale_threshold > 0.0)) fail("scale thresholds must be positive");
  }
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("TrainConfig: bad number for " + key + ": " + v);
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("TrainConfig: bad integer for " + key + ": " + v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw std::invalid_argument("TrainConfig: bad boolean for " + key + ": " + v);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  using Setter = std::function<void(TrainConfig&, const std::string&)>;
  const auto dbl = [](double TrainConfig::*f, const char* k) -> Setter {
    return [f, k](TrainConfig& c, const std::string& v) { c.*f = parse_double(k, v); };
  };
  const auto integer = [](int TrainConfig::*f, const char* k) -> Setter {
    return [f, k](TrainConfig& c, const std::string& v) { c.*f = static_cast<int>(parse_int(k, v)); };
  };
  const auto boolean = [](bool TrainConfig::*f, const char* k) -> Setter {
    return [f, k](TrainConfig& c, const std::string& v) { c.*f = parse_bool(k, v); };
  };
  static const std::map<std::string, Setter> table = {
      {"iterations", integer(&TrainConfig::iterations, "iterations")},
      {"lr_mlp", dbl(&TrainConfig::lr_mlp, "lr_mlp")},
      {"lr_means", dbl(&TrainConfig::lr_means, "lr_means")},
      {"lr_scales", dbl(&TrainConfig::lr_scales, "lr_scales")},
      {"lr_quats", dbl(&TrainConfig::lr_quats, "lr_quats")},
      {"lr_sh", dbl(&TrainConfig::lr_sh, "lr_sh")},
      {"ssim_weight", dbl(&TrainConfig::ssim_weight, "ssim_weight")},
      {"geo_reg_weight", dbl(&TrainConfig::geo_reg_weight, "geo_reg_weight")},
      {"densify", boolean(&TrainConfig::densify, "densify")},
      {"densify_interval", integer(&TrainConfig::densify_interval, "densify_interval")},
      {"densify_start", integer(&TrainConfig::densify_start, "densify_start")},
      {"densify_end", integer(&TrainConfig::densify_end, "densify_end")},
      {"grow_grad_threshold", dbl(&TrainConfig::grow_grad_threshold, "grow_grad_threshold")},
      {"prune_grad_threshold", dbl(&TrainConfig::prune_grad_threshold, "prune_grad_threshold")},
      {"grow_scale_threshold", dbl(&TrainConfig::grow_scale_threshold, "grow_scale_threshold")},
      {"prune_scale_threshold", dbl(&TrainConfig::prune_scale_threshold, "prune_scale_threshold")},
      {"rng_seed",
       [](TrainConfig& c, const std::string& v) { c.rng_seed = static_cast<std::uint64_t>(parse_int("rng_seed", v)); }},
      {"adam_beta1", dbl(&TrainConfig::adam_beta1, "adam_beta1")},
      {"adam_beta2", dbl(&TrainConfig::adam_beta2, "adam_beta2")},
      {"adam_eps", dbl(&TrainConfig::adam_eps, "adam_eps")},
      {"scale_means_lr", boolean(&TrainConfig::scale_means_lr, "scale_means_lr")},
      {"log_interval", integer(&TrainConfig::log_interval, "log_interval")},
      {"checkpoint_interval", integer(&TrainConfig::checkpoint_interval, "checkpoint_interval")},
  };
  const auto it = table.find(key);
  if (it == table.end()) {
    std::string known;
    for (const auto& [k, _] : table) known += (known.empty() ? "" : ", ") + k;
    throw std::invalid_argument("TrainConfig: unknown key '" + key + "' (known: " + known + ")");
  }
  it->second(*this, value);
}

std::string to_json_line(const LogRecord& r) {
  nlohmann::json j = {{"iter", r.iter},
                      {"loss", r.loss},
                      {"l1", r.l1},
                      {"dssim", r.dssim},
                      {"geo_reg", r.geo_reg},
                      {"psnr_train", r.psnr_train},
                      {"n_primitives", r.n_primitives},
                      {"wall_ms", r.wall_ms}};
  if (r.final) j["final"] = true;
  return j.dump();
}

namespace {

std::string checkpoint_name(const std::string& stem, int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", iter);
  return stem + "_" + buf + ".nspl";
}

}  // namespace

TrainResult train(const Dataset& data, Scene init, const TrainConfig& cfg, const TrainOptions& opts) {
  data.validate();
  if (data.train.empty()) throw std::invalid_argument("train: dataset has no training views");
  cfg.validate();
  opts.render.validate();

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };

  TrainResult res;
  res.scene = std::move(init);
  Scene& scene = res.scene;

  std::ofstream log_file;
  if (!opts.metrics_log.empty()) {
    log_file.open(opts.metrics_log, std::ios::app);
    if (!log_file) throw std::runtime_error("train: cannot open metrics log " + opts.metrics_log.string());
  }
  const auto emit = [&](const LogRecord& r) {
    res.log.push_back(r);
    if (log_file) log_file << to_json_line(r) << '\n' << std::flush;
    if (opts.on_log) opts.on_log(r);
  };
  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);

  RenderConfig rc = opts.render;
  rc.clamp_output = false;
  rc.keep_hits = true;
  RenderConfig eval_rc = opts.render;
  eval_rc.clamp_output = true;
  eval_rc.keep_hits = false;

  std::mt19937_64 rng(cfg.rng_seed);
  std::mt19937_64 pop_rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = data.train;
  std::size_t cursor = order.size();

  OptimizerState state(scene.layout(), scene.size());
  DensifyStats dstats(scene.size());
  const ParamLayout layout = scene.layout();

  for (int it = 1; it <= cfg.iterations; ++it) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::size_t view = order[cursor++];
    const Camera& cam = data.cameras[view];
    const Image& target = data.images[view];

    RenderOutput out = render(scene, cam, rc);
    LossResult lr = loss(out.color, target, scene, cfg);
    if (!std::isfinite(lr.total)) {
      if (!opts.checkpoint_dir.empty()) save_checkpoint(scene, opts.checkpoint_dir / checkpoint_name("nan", it));
      throw NonFiniteLossError("train: non-finite loss at iteration " + std::to_string(it));
    }
    GradientBuffer grads = render_backward(scene, cam, rc, lr.pixel_grad, &out);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      auto rec = grads.record(i);
      for (int k = 0; k < 3; ++k) rec[layout.scale + k] += lr.scale_grad[i][k];
    }
    if (cfg.densify) dstats.accumulate(grads);
    res.skipped_nonfinite += adam_step(scene, state, grads, cfg);

    if (cfg.log_interval > 0 && it % cfg.log_interval == 0) {
      LogRecord r;
      r.iter = it;
      r.loss = lr.total;
      r.l1 = lr.l1;
      r.dssim = lr.dssim;
      r.geo_reg = lr.geo_reg;
      r.psnr_train = psnr(out.color.clamped(), target);
      r.n_primitives = scene.size();
      r.wall_ms = elapsed_ms();
      emit(r);
    }

    if (cfg.densify && it >= cfg.densify_start && it <= cfg.densify_end && it % cfg.densify_interval == 0) {
      const std::vector<double> stats = dstats.values();
      std::optional<Scene> before;
      if (opts.on_population) before = scene;
      const PopulationReport rep = densify_and_prune(scene, stats, state, cfg, pop_rng);
      ++res.population_events;
      if (opts.on_population) opts.on_population(PopulationEvent{it, &*before, &scene, stats, &rep});
      dstats.reset(scene.size());
    }

    if (cfg.checkpoint_interval > 0 && !opts.checkpoint_dir.empty() && it % cfg.checkpoint_interval == 0) {
      save_checkpoint(scene, opts.checkpoint_dir / checkpoint_name("iter", it));
    }
  }

  // The returned scene is exactly what a checkpoint of it holds, so the final
  // record can be reproduced from the saved file.
  if (cfg.iterations > 0) quantize_to_float(scene);

  LogRecord fin;
  fin.iter = cfg.iterations;
  fin.final = true;
  fin.n_primitives = scene.size();
  for (std::size_t view : data.train) {
    const RenderOutput out = render(scene, data.cameras[view], eval_rc);
    const LossResult lr = loss(out.color, data.images[view], scene, cfg);
    fin.loss += lr.total;
    fin.l1 += lr.l1;
    fin.dssim += lr.dssim;
    fin.geo_reg += lr.geo_reg;
    fin.psnr_train += psnr(out.color, data.images[view]);
  }
  const double inv = 1.0 / double(data.train.size());
  fin.loss *= inv;
  fin.l1 *= inv;
  fin.dssim *= inv;
  fin.geo_reg *= inv;
  fin.psnr_train *= inv;
  fin.wall_ms = elapsed_ms();
  emit(fin);
  return res;
}

}  // namespace nspl
