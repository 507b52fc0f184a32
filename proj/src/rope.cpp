#include "growlen/rope.hpp"

#include <cmath>
#include <string>

namespace growlen {

void RopeConfig::validate() const {
  if (head_dim <= 0 || head_dim % 2 != 0)
    throw ConfigError("rope: head_dim must be even and positive, got " + std::to_string(head_dim));
  if (!(base > 1.0)) throw ConfigError("rope: base must be > 1");
  if (!(interpolation_factor >= 1.0)) throw ConfigError("rope: interpolation factor must be >= 1");
}

RopeConfig RopeConfig::with_interpolation(double factor) const {
  if (!(factor > 1.0)) throw ConfigError("rope: interpolation factor must be > 1");
  RopeConfig out = *this;
  out.interpolation_factor = factor;
  return out;
}

std::vector<double> frequencies(const RopeConfig& config) {
  config.validate();
  const int pairs = config.head_dim / 2;
  std::vector<double> theta(static_cast<size_t>(pairs));
  for (int i = 0; i < pairs; ++i)
    theta[static_cast<size_t>(i)] = std::pow(config.base, -2.0 * i / config.head_dim);
  return theta;
}

RopeTable build_table(const RopeConfig& config, int max_position) {
  config.validate();
  if (max_position < 1) throw ConfigError("rope: max_position must be >= 1");
  const auto theta = frequencies(config);
  const int pairs = config.head_dim / 2;

  RopeTable table;
  table.head_dim_ = config.head_dim;
  table.pairs_ = pairs;
  table.max_position_ = max_position;
  table.interpolation_factor_ = config.interpolation_factor;
  table.cos_.resize(static_cast<size_t>(max_position) * pairs);
  table.sin_.resize(static_cast<size_t>(max_position) * pairs);
  for (int m = 0; m < max_position; ++m) {
    const double effective = static_cast<double>(m) / config.interpolation_factor;
    float* crow = table.cos_.data() + static_cast<size_t>(m) * pairs;
    float* srow = table.sin_.data() + static_cast<size_t>(m) * pairs;
    for (int i = 0; i < pairs; ++i) {
      const double angle = effective * theta[static_cast<size_t>(i)];
      crow[i] = static_cast<float>(std::cos(angle));
      srow[i] = static_cast<float>(std::sin(angle));
    }
  }
  return table;
}

void RopeTable::check_position(int position) const {
  if (position < 0 || position >= max_position_)
    throw RangeError("rope: position " + std::to_string(position) + " outside table extent " +
                     std::to_string(max_position_));
}

std::vector<float> apply_rotary(std::span<const float> vec, int position, const RopeTable& table) {
  table.check_position(position);
  if (static_cast<int>(vec.size()) != table.head_dim())
    throw ShapeError("rope: vector length " + std::to_string(vec.size()) + " != head_dim " +
                     std::to_string(table.head_dim()));
  const int pairs = table.head_dim() / 2;
  const float* c = table.cos_row(position);
  const float* s = table.sin_row(position);
  std::vector<float> out(vec.size());
  for (int i = 0; i < pairs; ++i) {
    const float x0 = vec[static_cast<size_t>(2 * i)];
    const float x1 = vec[static_cast<size_t>(2 * i + 1)];
    out[static_cast<size_t>(2 * i)] = x0 * c[i] - x1 * s[i];
    out[static_cast<size_t>(2 * i + 1)] = x0 * s[i] + x1 * c[i];
  }
  return out;
}

double relative_score(std::span<const float> q, std::span<const float> k, int m, int n,
                      const RopeTable& table) {
  const auto qr = apply_rotary(q, m, table);
  const auto kr = apply_rotary(k, n, table);
  double acc = 0.0;
  for (size_t i = 0; i < qr.size(); ++i) acc += static_cast<double>(qr[i]) * kr[i];
  return acc;
}

}  // namespace growlen
