#include "nspl/scene.hpp"

#include <algorithm>
#include <stdexcept>

namespace nspl {

std::vector<double> Scene::flatten() const {
  const ParamLayout l = layout();
  std::vector<double> out(size() * l.size);
  for (std::size_t i = 0; i < size(); ++i) {
    pack(primitives[i], l, std::span<double>(out.data() + i * l.size, l.size));
  }
  return out;
}

Scene Scene::from_flat(const PrimitiveConfig& cfg, std::span<const double> flat, const Rgb& background,
                       double extent) {
  const ParamLayout l(cfg);
  if (flat.size() % l.size != 0) throw std::invalid_argument("Scene::from_flat: size is not a record multiple");
  Scene s;
  s.config = cfg;
  s.background = background;
  s.extent = extent;
  const std::size_t n = flat.size() / l.size;
  s.primitives.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.primitives.push_back(unpack(cfg, l, flat.subspan(i * l.size, l.size)));
  return s;
}

GradientBuffer::GradientBuffer(const ParamLayout& l, std::size_t n)
    : layout(l), count(n), values(n * l.size, 0.0), touched(n, 0) {}

void GradientBuffer::reset() {
  std::fill(values.begin(), values.end(), 0.0);
  std::fill(touched.begin(), touched.end(), 0);
}

GradientBuffer& GradientBuffer::operator+=(const GradientBuffer& other) {
  if (other.values.size() != values.size()) throw std::invalid_argument("GradientBuffer: shape mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
  for (std::size_t i = 0; i < touched.size(); ++i) touched[i] |= other.touched[i];
  return *this;
}

}  // namespace nspl
