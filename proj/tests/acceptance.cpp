// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. The toy fit drives the command-line tool at NSPL_CLI_PATH.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "nspl/checks.hpp"
#include "nspl/image.hpp"
#include "nspl/oracle.hpp"
#include "nspl/scene_io.hpp"
#include "nspl/training.hpp"

using namespace nspl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

Outcome from_report(const CheckReport& r, double limit_s, const std::string& worst_label = "worst") {
  Outcome o;
  o.pass = r.passed && r.seconds < limit_s;
  o.detail = std::to_string(r.cases) + " cases, " + std::to_string(r.failures) + " failures, " + worst_label + " " +
             fmt(r.worst_error) + ", " + fmt(r.seconds) + " s (limit " + fmt(limit_s) + " s)";
  for (const auto& [k, v] : r.extras) o.detail += ", " + k + " " + fmt(v);
  if (!r.passed && !r.failure_details.empty()) o.detail += "; first failure: " + r.failure_details.front();
  return o;
}

// 1. Closed-form integrals against adaptive quadrature.
Outcome closed_form_integrals() {
  IntegralCheckOptions o;
  o.cases = 10000;
  o.min_scale = 0.1;
  o.max_scale = 10.0;
  o.hidden = 8;
  o.omega = 30.0;
  o.tolerance = 1e-6;
  return from_report(check_integrals(o), 60.0);
}

// 2. Loss-level gradients against central differences.
Outcome gradients() {
  GradientCheckOptions o;
  o.primitives = 4;
  o.resolution = 16;
  o.tolerance = 1e-3;
  o.loose_tolerance = 1e-2;
  o.required_fraction = 0.95;
  return from_report(check_gradients(o), 300.0);
}

// 3. Splatting equals ray-marched volume rendering on disjoint supports.
Outcome splat_vs_volume() {
  RenderOracleOptions o;
  o.primitives = 20;
  o.samples = 4096;
  o.tolerance = 1e-4;
  return from_report(check_render_oracle(o), 600.0);
}

// 4. Additivity, origin shift and stable-form agreement.
Outcome integral_properties() {
  PropertyCheckOptions o;
  o.cases = 10000;
  o.identity_tolerance = 1e-9;
  o.form_tolerance = 1e-7;
  o.min_phase_span = 1e-3;
  return from_report(check_integral_properties(o), 600.0, "worst error/tolerance");
}

// 5. Default-config record size, and the file size that follows from it.
Outcome parameter_accounting() {
  const PrimitiveConfig def;
  const ParamLayout l(def);
  const int geometry = 3 + 3 + 4;
  const int sh = 3 * sh_coeff_count(def.sh_degree);
  Scene s;
  s.config = def;
  s.primitives.assign(100, NeuralPrimitive::zeros(def));
  const std::size_t bytes = encode_checkpoint(s).size();
  const std::size_t expected = kCheckpointPreambleBytes + kCheckpointHeaderBytes + 100 * 99 * 4;
  Outcome o;
  o.pass = l.size == 99 && l.mlp_size() == 41 && geometry == 10 && sh == 48 &&
           l.mlp_size() + geometry + sh == l.size && bytes == expected;
  o.detail = "record " + std::to_string(l.size) + " = " + std::to_string(l.mlp_size()) + " mlp + " +
             std::to_string(geometry) + " geometry + " + std::to_string(sh) + " sh; 100-primitive file " +
             std::to_string(bytes) + " bytes (expected " + std::to_string(expected) + ")";
  return o;
}

int run(const std::string& cmd, const fs::path& stdout_file) {
  const std::string full = cmd + " > '" + stdout_file.string() + "' 2> '" + stdout_file.string() + ".err'";
  const int rc = std::system(full.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 6. Toy fit through the command-line tool.
Outcome toy_fit(const fs::path& work) {
  Outcome o;
  const std::string cli = NSPL_CLI_PATH;
  const fs::path data = work / "toy", out = work / "run";
  const auto t0 = std::chrono::steady_clock::now();
  if (run(cli + " gen-toy --shape sphere --views 8 --res 128 --seed 0 --out '" + data.string() + "'",
          work / "gen.txt") != 0) {
    o.detail = "gen-toy failed";
    return o;
  }
  if (run(cli + " train --data '" + data.string() + "' --out '" + out.string() +
              "' --budget 16 --iters 2000 --seed 0 --log-interval 500",
          work / "train.txt") != 0) {
    o.detail = "train failed";
    return o;
  }
  const double wall = seconds_since(t0);
  double psnr[2] = {0, 0};
  const char* names[2] = {"init.nspl", "final.nspl"};
  for (int i = 0; i < 2; ++i) {
    const fs::path report = work / (std::string("eval_") + names[i] + ".json");
    if (run(cli + " eval --split test --checkpoint '" + (out / names[i]).string() + "' --data '" + data.string() + "'",
            report) != 0) {
      o.detail = std::string("eval of ") + names[i] + " failed";
      return o;
    }
    std::ifstream in(report);
    psnr[i] = nlohmann::json::parse(in).at("mean_psnr").get<double>();
  }
  const double gain = psnr[1] - psnr[0];
  o.pass = gain >= 10.0 && wall < 30 * 60;
  o.detail = "test PSNR " + fmt(psnr[0]) + " -> " + fmt(psnr[1]) + " dB (gain " + fmt(gain) +
             ", need >= 10); gen+train " + fmt(wall) + " s (limit 1800 s)";
  return o;
}

Dataset small_toy(std::vector<Vec3>* points) {
  ToyDataset toy = gen_toy_dataset(AnalyticDensity::from_tag("sphere"), 8, 48, 1);
  if (points) *points = subsample_points(toy.points, 200, 1);
  return toy.data;
}

// 7. Every population event against the counting oracle.
Outcome population_control() {
  std::vector<Vec3> pts;
  const Dataset data = small_toy(&pts);
  InitConfig ic;
  ic.extent = data.extent;
  ic.seed = 7;
  const Scene init = init_scene(pts, {}, ic);

  TrainConfig cfg = TrainConfig::real_scene();
  cfg.iterations = 500;
  cfg.densify = true;
  cfg.densify_start = 100;
  cfg.densify_interval = 100;
  cfg.densify_end = 400;
  cfg.rng_seed = 7;
  cfg.log_interval = 0;

  std::size_t events = 0, violations = 0, grown = 0, removed = 0, compared = 0;
  TrainOptions opts;
  opts.on_population = [&](const PopulationEvent& ev) {
    ++events;
    const Scene& before = *ev.before;
    const Scene& after = *ev.after;
    const PopulationReport& rep = *ev.report;
    grown += rep.grown;
    removed += rep.removed;
    // Independent recount from the stats.
    std::size_t pruned = 0, added = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const double smax = before.primitives[i].geometry.scale.cwiseAbs().maxCoeff();
      const double s = ev.stats[i];
      if (smax > cfg.prune_scale_threshold * before.extent || s < cfg.prune_grad_threshold) {
        ++pruned;
      } else if (s > cfg.grow_grad_threshold) {
        if (smax <= cfg.grow_scale_threshold * before.extent) {
          ++added;
        } else {
          added += 2;
          ++pruned;
        }
      }
    }
    if (after.size() != before.size() + added - pruned) ++violations;
    if (rep.grown != added || rep.removed != pruned) ++violations;
    // Survivors keep every parameter bit for bit; nothing else resets them.
    const ParamLayout l = before.layout();
    std::vector<double> a(l.size), b(l.size);
    for (std::size_t i = 0; i < after.size(); ++i) {
      if (rep.source[i] < 0) continue;
      pack(after.primitives[i], l, a);
      pack(before.primitives[std::size_t(rep.source[i])], l, b);
      ++compared;
      if (a != b) ++violations;
    }
  };
  const TrainResult res = train(data, init, cfg, opts);
  Outcome o;
  o.pass = events > 0 && violations == 0 && grown + removed > 0 && res.population_events == events;
  o.detail = std::to_string(events) + " events, " + std::to_string(grown) + " grown, " + std::to_string(removed) +
             " removed, " + std::to_string(compared) + " survivors compared, " + std::to_string(violations) +
             " violations; final count " + std::to_string(res.scene.size());
  return o;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Bit-identical checkpoints and PNGs across runs and thread counts.
Outcome determinism(const fs::path& work) {
  std::vector<Vec3> pts;
  const Dataset data = small_toy(&pts);
  InitConfig ic;
  ic.extent = data.extent;
  ic.seed = 3;
  const Scene init = init_scene(pts, {}, ic);
  TrainConfig cfg = TrainConfig::real_scene();
  cfg.iterations = 300;
  cfg.densify_start = 100;
  cfg.densify_interval = 100;
  cfg.densify_end = 200;
  cfg.rng_seed = 3;
  cfg.log_interval = 0;

  std::vector<std::vector<std::uint8_t>> ckpts, pngs;
  for (int threads : {1, 1, 3}) {
    TrainOptions opts;
    opts.render.deterministic = true;
    opts.render.threads = threads;
    const TrainResult res = train(data, init, cfg, opts);
    const fs::path ck = work / ("det_" + std::to_string(ckpts.size()) + ".nspl");
    save_checkpoint(res.scene, ck);
    ckpts.push_back(file_bytes(ck));
    RenderConfig rc = opts.render;
    const fs::path png = work / ("det_" + std::to_string(pngs.size()) + ".png");
    write_png(png, render(res.scene, data.cameras[data.test.front()], rc).color);
    pngs.push_back(file_bytes(png));
  }
  const bool same_ckpt = ckpts[0] == ckpts[1] && ckpts[0] == ckpts[2];
  const bool same_png = pngs[0] == pngs[1] && pngs[0] == pngs[2];

  const Scene loaded = load_checkpoint(work / "det_0.nspl");
  save_checkpoint(loaded, work / "det_again.nspl");
  const bool round_trip = file_bytes(work / "det_again.nspl") == ckpts[0];

  Outcome o;
  o.pass = same_ckpt && same_png && round_trip;
  o.detail = std::string("checkpoints ") + (same_ckpt ? "identical" : "DIFFER") + " over runs with 1, 1, 3 threads; PNGs " +
             (same_png ? "identical" : "DIFFER") + "; save/load/save " + (round_trip ? "bit-exact" : "NOT bit-exact");
  return o;
}

// 9. Temporal mode reduces to static mode and its integrals are exact.
Outcome temporal() {
  TemporalCheckOptions o;
  o.integral_cases = 2000;
  o.tolerance = 1e-6;
  return from_report(check_temporal(o), 600.0);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / ("nspl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"closed-form integrals vs quadrature", closed_form_integrals},
      {"gradients vs finite differences", gradients},
      {"splatting vs ray-marched volume rendering", splat_vs_volume},
      {"integral properties", integral_properties},
      {"parameter accounting", parameter_accounting},
      {"toy expressivity fit", [&] { return toy_fit(work); }},
      {"population control", population_control},
      {"determinism and persistence", [&] { return determinism(work); }},
      {"temporal mode sanity", temporal},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << " [" << fmt(seconds_since(t0)) << " s]" << std::endl;
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  std::cout << (failed ? "acceptance FAILED (" + std::to_string(failed) + " criteria)" : std::string("acceptance PASSED"))
            << std::endl;
  return failed ? 1 : 0;
}
