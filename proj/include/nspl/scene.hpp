#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nspl/neural_field.hpp"

namespace nspl {

/// Ordered primitive collection plus the global quantities rendering and
/// population control depend on.
struct Scene {
  PrimitiveConfig config;
  std::vector<NeuralPrimitive> primitives;
  Rgb background = Rgb::Zero();
  double extent = 1.0;

  std::size_t size() const { return primitives.size(); }
  bool empty() const { return primitives.empty(); }
  ParamLayout layout() const { return ParamLayout(config); }
  std::size_t parameter_count() const { return size() * static_cast<std::size_t>(layout().size); }

  /// All primitive records concatenated in layout order.
  std::vector<double> flatten() const;
  static Scene from_flat(const PrimitiveConfig& cfg, std::span<const double> flat, const Rgb& background,
                         double extent);
};

/// Per-primitive gradient records mirroring Scene::flatten().
struct GradientBuffer {
  ParamLayout layout;
  std::size_t count = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> touched;  // primitive received at least one hit

  GradientBuffer() = default;
  GradientBuffer(const ParamLayout& l, std::size_t n);

  std::span<double> record(std::size_t i) { return {values.data() + i * layout.size, std::size_t(layout.size)}; }
  std::span<const double> record(std::size_t i) const {
    return {values.data() + i * layout.size, std::size_t(layout.size)};
  }
  void reset();
  GradientBuffer& operator+=(const GradientBuffer& other);
};

}  // namespace nspl
