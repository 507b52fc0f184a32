#pragma once

#include <span>
#include <vector>

#include "growlen/errors.hpp"

namespace growlen {

// Rotary position embedding configuration. `interpolation_factor` of 1
// means no scaling; a factor f > 1 rescales positions m -> m/f so a long
// evaluation context maps into the trained positional range.
struct RopeConfig {
  int head_dim = 0;
  double base = 10000.0;
  double interpolation_factor = 1.0;

  void validate() const;
  RopeConfig with_interpolation(double factor) const;
};

// Precomputed per-(position, frequency-pair) rotation values. Immutable
// after construction and freely shareable.
class RopeTable {
 public:
  RopeTable() = default;

  int head_dim() const { return head_dim_; }
  int max_position() const { return max_position_; }
  double interpolation_factor() const { return interpolation_factor_; }

  // Row accessors; stride is head_dim/2 pairs per position.
  const float* cos_row(int position) const { return cos_.data() + static_cast<size_t>(position) * pairs_; }
  const float* sin_row(int position) const { return sin_.data() + static_cast<size_t>(position) * pairs_; }
  std::span<const float> cos_values() const { return cos_; }
  std::span<const float> sin_values() const { return sin_; }

  void check_position(int position) const;

 private:
  friend RopeTable build_table(const RopeConfig& config, int max_position);
  int head_dim_ = 0;
  int pairs_ = 0;
  int max_position_ = 0;
  double interpolation_factor_ = 1.0;
  std::vector<float> cos_;
  std::vector<float> sin_;
};

// Per-pair rotation frequencies: theta_i = base^(-2i/head_dim) for pair
// index i in [0, head_dim/2). Strictly decreasing, first element exactly 1.
std::vector<double> frequencies(const RopeConfig& config);

// Angles are position * theta_i, with positions rescaled by the
// interpolation factor when one is configured. Trig evaluated in double,
// stored as float.
RopeTable build_table(const RopeConfig& config, int max_position);

// Rotate adjacent coordinate pairs (2i, 2i+1) of `vec` by the angles of
// `position`. Norm-preserving.
std::vector<float> apply_rotary(std::span<const float> vec, int position, const RopeTable& table);

// dot(apply_rotary(q, m), apply_rotary(k, n)); depends only on m - n.
double relative_score(std::span<const float> q, std::span<const float> k, int m, int n,
                      const RopeTable& table);

}  // namespace growlen
