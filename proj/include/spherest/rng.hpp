#pragma once

#include <array>
#include <cstdint>

namespace spherest {

/// Deterministic random stream with cheap derivation of independent
/// sub-streams. Child streams are keyed on the parent's base seed and an
/// index, never on the parent's draw position, so replicate- or item-level
/// parallelism reproduces the serial results bit for bit.
///
/// The generator core is xoshiro256++ seeded through splitmix64. All real
/// variates are produced by inversion from a single uniform in (0,1), which
/// keeps draws aligned across nearby parameter values (common random
/// numbers).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent stream derived from (base seed, index).
  RngStream child(std::uint64_t index) const;

  std::uint64_t base_seed() const { return base_; }

  std::uint64_t next_u64();

  /// Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via inverse-c.d.f. (one uniform per variate).
  double normal();
  double normal(double mean, double sd);
  double lognormal(double log_mean, double log_sd);

  /// Uniform integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n);

  /// Poisson count with arbitrary (finite) mean.
  long poisson(double mean);

 private:
  std::uint64_t base_;
  std::array<std::uint64_t, 4> state_;
};

}  // namespace spherest
