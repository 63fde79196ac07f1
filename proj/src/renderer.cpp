#include "nspl/renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "nspl/parallel.hpp"

namespace nspl {

namespace {

constexpr int kChunkRows = 4;

struct HitShade {
  double kappa = 0.0;
  double integral = 0.0;
  Rgb raw_color = Rgb::Zero();
  Rgb color = Rgb::Zero();
  double transmittance = 1.0;  // before this hit
};

// Everything shared by the pixels of one render call.
struct FrameContext {
  const Scene& scene;
  const RenderConfig& cfg;
  Rgb background;
  double time = 0.0;
  std::vector<PreparedPrimitive> prepared;
  std::vector<double> series_weights;  // temporal SH weights at `time`
  std::vector<Rgb> dc;                 // per-primitive zero-order coefficient at `time`

  FrameContext(const Scene& s, const RenderConfig& c, double t)
      : scene(s), cfg(c), background(c.background.value_or(s.background)), time(t) {
    prepared.reserve(s.size());
    dc.reserve(s.size());
    for (const auto& p : s.primitives) {
      prepared.emplace_back(p);
      if (p.temporal_sh) {
        if (series_weights.empty()) {
          series_weights.resize(p.temporal_sh->scalar_count() / 3);
          temporal_series_weights(*p.temporal_sh, t, series_weights);
        }
        dc.push_back(temporal_sh0(p.sh.coeffs[0], *p.temporal_sh, t));
      } else {
        dc.push_back(p.sh.coeffs[0]);
      }
    }
  }
};

void gather_candidates(const FrameContext& ctx, const std::uint32_t* begin, const std::uint32_t* end, const Ray& r,
                       std::vector<RayHit>& out, bool* truncated) {
  out.clear();
  for (const std::uint32_t* it = begin; it != end; ++it) {
    if (auto hit = intersect(ctx.prepared[*it].frame, r)) out.push_back(RayHit{*it, *hit});
  }
  std::sort(out.begin(), out.end(), [](const RayHit& a, const RayHit& b) {
    if (a.segment.t_in != b.segment.t_in) return a.segment.t_in < b.segment.t_in;
    return a.index < b.index;
  });
  const std::size_t cap = static_cast<std::size_t>(std::max(0, ctx.cfg.max_hits_per_ray));
  const bool over = out.size() > cap;
  if (over) out.resize(cap);
  if (truncated) *truncated = over;
}

// Front-to-back compositing over sorted hits. When `record` is given it
// receives one entry per blended hit (stopping at the early exit).
Rgb shade(const FrameContext& ctx, const Ray& r, const std::vector<RayHit>& hits, std::vector<HitShade>* record) {
  if (record) record->clear();
  std::array<double, kMaxShCoeffs> basis{};
  if (!hits.empty()) sh_basis(ctx.scene.config.sh_degree, r.direction, basis);

  Rgb c = Rgb::Zero();
  double transmittance = 1.0;
  for (const RayHit& h : hits) {
    const PreparedPrimitive& pp = ctx.prepared[h.index];
    const NeuralPrimitive& prim = *pp.prim;
    const double integral = segment_integral(pp, r, h.segment, ctx.time);
    const double kappa = -std::expm1(-std::max(0.0, integral));

    Rgb raw = basis[0] * ctx.dc[h.index];
    for (int i = 1; i < prim.sh.count(); ++i) raw += basis[i] * prim.sh.coeffs[i];
    raw.array() += 0.5;
    const Rgb color = raw.cwiseMax(0.0);

    if (record) record->push_back(HitShade{kappa, integral, raw, color, transmittance});
    c += (kappa * transmittance) * color;
    transmittance *= 1.0 - kappa;
    if (transmittance < ctx.cfg.transmittance_floor) break;
  }
  return c + transmittance * ctx.background;
}

// Conservative pixel-space bounds of each primitive's bounding sphere, binned
// into square tiles. Primitives whose sphere crosses the camera plane cover
// the whole image.
struct TileBins {
  int tile = 16;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> lists;

  const std::vector<std::uint32_t>& at(int x, int y) const { return lists[(y / tile) * tiles_x + (x / tile)]; }
};

bool slope_range(double lateral, double depth, double radius, double& lo, double& hi) {
  const double denom = depth * depth - radius * radius;
  const double root = std::sqrt(std::max(0.0, lateral * lateral + denom));
  lo = (lateral * depth - radius * root) / denom;
  hi = (lateral * depth + radius * root) / denom;
  return std::isfinite(lo) && std::isfinite(hi);
}

TileBins bin_primitives(const FrameContext& ctx, const Camera& cam) {
  TileBins bins;
  bins.tile = std::max(1, ctx.cfg.tile_size);
  bins.tiles_x = (cam.width + bins.tile - 1) / bins.tile;
  bins.tiles_y = (cam.height + bins.tile - 1) / bins.tile;
  bins.lists.assign(std::size_t(bins.tiles_x) * bins.tiles_y, {});
  const Mat3 rt = cam.rotation.transpose();
  for (std::uint32_t i = 0; i < ctx.prepared.size(); ++i) {
    const PreparedPrimitive& pp = ctx.prepared[i];
    const Vec3 p = rt * (pp.frame.center - cam.translation);
    const double radius = pp.bounding_radius * (1.0 + 1e-6) + 1e-9;
    if (p.z() + radius < 0.0) continue;
    if (p.norm() - radius > ctx.cfg.t_far) continue;
    int x0 = 0, x1 = cam.width - 1, y0 = 0, y1 = cam.height - 1;
    double lo_x, hi_x, lo_y, hi_y;
    if (p.z() > radius * 1.001 + 1e-9 && slope_range(p.x(), p.z(), radius, lo_x, hi_x) &&
        slope_range(p.y(), p.z(), radius, lo_y, hi_y)) {
      const double fx0 = cam.fx * lo_x + cam.cx - 0.5, fx1 = cam.fx * hi_x + cam.cx - 0.5;
      const double fy0 = cam.fy * lo_y + cam.cy - 0.5, fy1 = cam.fy * hi_y + cam.cy - 0.5;
      if (fx1 < -1.0 || fy1 < -1.0 || fx0 > cam.width || fy0 > cam.height) continue;
      x0 = std::max(0, static_cast<int>(std::floor(fx0)) - 1);
      x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(fx1)) + 1);
      y0 = std::max(0, static_cast<int>(std::floor(fy0)) - 1);
      y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(fy1)) + 1);
    }
    for (int ty = y0 / bins.tile; ty <= y1 / bins.tile; ++ty) {
      for (int tx = x0 / bins.tile; tx <= x1 / bins.tile; ++tx) bins.lists[ty * bins.tiles_x + tx].push_back(i);
    }
  }
  return bins;
}

// Reverse pass of shade() for one ray, accumulating into per-primitive records.
void backprop_ray(const FrameContext& ctx, const Ray& r, const std::vector<RayHit>& hits,
                  const std::vector<HitShade>& shades, const Rgb& dl_dc, GradientBuffer& grad) {
  if (shades.empty()) return;
  const ParamLayout& l = grad.layout;
  std::array<double, kMaxShCoeffs> basis{};
  sh_basis(ctx.scene.config.sh_degree, r.direction, basis);

  Rgb behind = ctx.background;  // color seen just behind the current hit
  for (std::size_t i = shades.size(); i-- > 0;) {
    const HitShade& s = shades[i];
    const std::uint32_t idx = hits[i].index;
    const PreparedPrimitive& pp = ctx.prepared[idx];
    auto rec = grad.record(idx);
    grad.touched[idx] = 1;

    const double dl_dkappa = s.transmittance * (s.color - behind).dot(dl_dc);
    Rgb dl_dcolor = (s.kappa * s.transmittance) * dl_dc;
    behind = s.kappa * s.color + (1.0 - s.kappa) * behind;

    if (s.integral > 0.0) {
      const double dl_dintegral = dl_dkappa * std::exp(-s.integral);
      integral_backward_into(pp, r, hits[i].segment, ctx.time, dl_dintegral, l, rec);
    }

    for (int ch = 0; ch < 3; ++ch) {
      if (s.raw_color[ch] < 0.0) dl_dcolor[ch] = 0.0;
    }
    const NeuralPrimitive& prim = *pp.prim;
    for (int j = 0; j < prim.sh.count(); ++j) {
      for (int ch = 0; ch < 3; ++ch) rec[l.sh + 3 * j + ch] += basis[j] * dl_dcolor[ch];
    }
    if (prim.temporal_sh && l.temporal) {
      const Rgb g_dc = basis[0] * dl_dcolor;
      const auto& w = ctx.series_weights;
      const int np = l.poly_order, nf = l.fourier_order;
      for (int j = 0; j < np; ++j) {
        for (int ch = 0; ch < 3; ++ch) rec[l.poly + 3 * j + ch] += w[j] * g_dc[ch];
      }
      for (int j = 0; j < nf; ++j) {
        for (int ch = 0; ch < 3; ++ch) {
          rec[l.four_cos + 3 * j + ch] += w[np + j] * g_dc[ch];
          rec[l.four_sin + 3 * j + ch] += w[np + nf + j] * g_dc[ch];
        }
      }
    }
  }
}

std::vector<std::uint32_t> all_indices(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

void RenderConfig::validate() const {
  if (!(transmittance_floor > 0.0 && transmittance_floor < 1.0)) {
    throw std::invalid_argument("RenderConfig: transmittance_floor must be in (0, 1)");
  }
  if (!(t_near >= 0.0) || !(t_far > t_near)) throw std::invalid_argument("RenderConfig: require 0 <= t_near < t_far");
  if (max_hits_per_ray < 1) throw std::invalid_argument("RenderConfig: max_hits_per_ray must be >= 1");
  if (tile_size < 1) throw std::invalid_argument("RenderConfig: tile_size must be >= 1");
  if (threads < 0) throw std::invalid_argument("RenderConfig: threads must be >= 0");
}

std::vector<RayHit> gather_hits(const Scene& scene, const Ray& r, const RenderConfig& cfg, bool* truncated) {
  const FrameContext ctx(scene, cfg, 0.0);
  const auto idx = all_indices(scene.size());
  std::vector<RayHit> out;
  gather_candidates(ctx, idx.data(), idx.data() + idx.size(), r, out, truncated);
  return out;
}

Rgb composite(const Scene& scene, const Ray& r, const RenderConfig& cfg, double time) {
  const FrameContext ctx(scene, cfg, time);
  const auto idx = all_indices(scene.size());
  std::vector<RayHit> hits;
  gather_candidates(ctx, idx.data(), idx.data() + idx.size(), r, hits, nullptr);
  return shade(ctx, r, hits, nullptr);
}

RenderOutput render(const Scene& scene, const Camera& cam, const RenderConfig& cfg) {
  cfg.validate();
  cam.validate();
  const FrameContext ctx(scene, cfg, cam.time);
  const TileBins bins = bin_primitives(ctx, cam);

  RenderOutput out;
  out.color = Image(cam.width, cam.height);
  std::vector<std::vector<RayHit>> row_hits(cfg.keep_hits ? cam.height : 0);
  std::vector<std::vector<std::uint32_t>> row_counts(cfg.keep_hits ? cam.height : 0);
  std::vector<std::size_t> row_truncated(cam.height, 0), row_total(cam.height, 0);

  parallel_for(std::size_t(cam.height), resolve_threads(cfg.threads), [&](std::size_t row, int) {
    const int y = static_cast<int>(row);
    std::vector<RayHit> hits;
    for (int x = 0; x < cam.width; ++x) {
      const Ray r = pixel_ray(cam, x, y, cfg.t_near, cfg.t_far);
      const auto& cand = bins.at(x, y);
      bool truncated = false;
      gather_candidates(ctx, cand.data(), cand.data() + cand.size(), r, hits, &truncated);
      Rgb c = shade(ctx, r, hits, nullptr);
      if (cfg.clamp_output) c = c.cwiseMax(0.0).cwiseMin(1.0);
      out.color.set(x, y, c);
      row_truncated[y] += truncated ? 1 : 0;
      row_total[y] += hits.size();
      if (cfg.keep_hits) {
        row_hits[y].insert(row_hits[y].end(), hits.begin(), hits.end());
        row_counts[y].push_back(static_cast<std::uint32_t>(hits.size()));
      }
    }
  });

  for (int y = 0; y < cam.height; ++y) {
    out.stats.truncated_rays += row_truncated[y];
    out.stats.total_hits += row_total[y];
  }
  if (cfg.keep_hits) {
    HitStore store;
    store.offsets.reserve(out.color.pixel_count() + 1);
    store.offsets.push_back(0);
    store.hits.reserve(out.stats.total_hits);
    for (int y = 0; y < cam.height; ++y) {
      for (std::uint32_t n : row_counts[y]) store.offsets.push_back(store.offsets.back() + n);
      store.hits.insert(store.hits.end(), row_hits[y].begin(), row_hits[y].end());
    }
    out.hits = std::move(store);
  }
  return out;
}

GradientBuffer render_backward(const Scene& scene, const Camera& cam, const RenderConfig& cfg, const Image& dl_dcolor,
                               const RenderOutput* forward) {
  cfg.validate();
  cam.validate();
  if (dl_dcolor.width != cam.width || dl_dcolor.height != cam.height) {
    throw std::invalid_argument("render_backward: gradient image does not match the camera");
  }
  const ParamLayout layout = scene.layout();
  const std::size_t n = scene.size();
  GradientBuffer total(layout, n);
  if (n == 0) return total;

  const FrameContext ctx(scene, cfg, cam.time);
  const HitStore* store = (forward && forward->hits) ? &*forward->hits : nullptr;
  if (store && store->offsets.size() != std::size_t(cam.width) * cam.height + 1) {
    throw std::invalid_argument("render_backward: stored hits do not match the camera");
  }
  const TileBins bins = store ? TileBins{} : bin_primitives(ctx, cam);

  const int threads = resolve_threads(cfg.threads);
  const std::size_t chunks = (std::size_t(cam.height) + kChunkRows - 1) / kChunkRows;
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(1, threads), chunks));

  struct Partial {
    std::vector<std::uint32_t> index;
    std::vector<double> values;
  };
  std::vector<GradientBuffer> scratch(workers, GradientBuffer(layout, n));
  std::vector<Partial> partials(cfg.deterministic ? chunks : 0);

  parallel_for(chunks, workers, [&](std::size_t chunk, int worker) {
    GradientBuffer& g = scratch[worker];
    std::vector<RayHit> hits;
    std::vector<HitShade> shades;
    const int y_end = std::min<int>(cam.height, static_cast<int>((chunk + 1) * kChunkRows));
    for (int y = static_cast<int>(chunk * kChunkRows); y < y_end; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const double* up = dl_dcolor.px(x, y);
        const Rgb dl_dc(up[0], up[1], up[2]);
        if (dl_dc.isZero(0.0)) continue;
        const Ray r = pixel_ray(cam, x, y, cfg.t_near, cfg.t_far);
        if (store) {
          const std::size_t p = std::size_t(y) * cam.width + x;
          hits.assign(store->hits.begin() + store->offsets[p], store->hits.begin() + store->offsets[p + 1]);
        } else {
          const auto& cand = bins.at(x, y);
          gather_candidates(ctx, cand.data(), cand.data() + cand.size(), r, hits, nullptr);
        }
        shade(ctx, r, hits, &shades);
        backprop_ray(ctx, r, hits, shades, dl_dc, g);
      }
    }
    if (cfg.deterministic) {
      // Move this chunk's contribution out of the scratch buffer so chunks can
      // be summed in index order regardless of which worker ran them.
      Partial& part = partials[chunk];
      for (std::uint32_t i = 0; i < n; ++i) {
        if (!g.touched[i]) continue;
        auto rec = g.record(i);
        part.index.push_back(i);
        part.values.insert(part.values.end(), rec.begin(), rec.end());
        std::fill(rec.begin(), rec.end(), 0.0);
        g.touched[i] = 0;
      }
    }
  });

  if (cfg.deterministic) {
    for (const Partial& part : partials) {
      for (std::size_t k = 0; k < part.index.size(); ++k) {
        auto rec = total.record(part.index[k]);
        const double* src = part.values.data() + k * layout.size;
        for (int j = 0; j < layout.size; ++j) rec[j] += src[j];
        total.touched[part.index[k]] = 1;
      }
    }
  } else {
    for (const auto& g : scratch) total += g;
  }
  return total;
}

}  // namespace nspl
