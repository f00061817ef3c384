#pragma once

// Exact sampling of linear stochastic processes at arbitrary times.
// Randomness: std::mt19937_64 seeded through splitmix64, standard normals from
// std::normal_distribution. Identical seeds give bit-identical paths on the
// same toolchain.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "modesleuth/lsp_model.hpp"
#include "modesleuth/observations.hpp"

namespace modesleuth {

/// splitmix64 finalizer; used to derive independent sub-seeds from one seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SamplePath {
  std::vector<double> times;
  Matrix states;  ///< n × times.size(), column i is x(times[i])
};

/// Stationary draw by default; a fixed vector pins x(times[0]).
struct InitialCondition {
  std::optional<Vector> fixed;

  static InitialCondition stationary() { return {}; }
  static InitialCondition at(Vector x0) { return {std::move(x0)}; }
};

/// x_i = Φ(τ_i) x_{i-1} + (I - Φ(τ_i)) μ + w_i,  w_i ~ N(0, G(τ_i)).
/// Throws InvalidTimes unless `times` is strictly increasing.
SamplePath sample_path(const LtiSystem& sys, std::span<const double> times, const InitialCondition& init,
                       std::uint64_t seed);

/// y_i = Z_i x(t_i) + m_i + ξ_i for every slot; slot times must lie on the path.
std::vector<ObservationRecord> observe_path(const SamplePath& path, const ObservationScheme& scheme,
                                            std::uint64_t seed);

/// Observes every channel of a fixed observation map at every path time.
/// `keep_probability` < 1 drops channels independently (at least one is kept).
std::vector<ChannelRecord> observe_channels(const SamplePath& path, const Matrix& observation, const Vector& offsets,
                                            const Vector& noise_var, std::uint64_t seed,
                                            double keep_probability = 1.0);

/// Evenly spaced times t0, t0 + dt, ..., n values.
std::vector<double> regular_times(std::size_t n, double dt, double t0 = 0.0);

}  // namespace modesleuth
