#pragma once

// Linear stochastic process models: dx = (A x + m) dt + dW with cov(dW) = K dt,
// their stationary/lagged covariances, and the reduced mode-model family.

#include <cstddef>
#include <vector>

#include "modesleuth/matfun.hpp"

namespace modesleuth {

/// A stable linear system forced by white noise. Construction validates
/// stability of the drift and symmetric-psd forcing.
class LtiSystem {
 public:
  LtiSystem(Matrix drift, Matrix forcing, Vector mean_forcing = Vector());

  const Matrix& drift() const { return drift_; }
  const Matrix& forcing() const { return forcing_; }
  const Vector& mean_forcing() const { return mean_forcing_; }
  Eigen::Index dimension() const { return drift_.rows(); }
  bool has_mean_forcing() const { return mean_forcing_.size() > 0 && mean_forcing_.cwiseAbs().maxCoeff() != 0.0; }

 private:
  Matrix drift_;
  Matrix forcing_;
  Vector mean_forcing_;
};

/// Σ = ∫₀^∞ e^{As} K e^{Aᵀs} ds.
Matrix stationary_covariance(const LtiSystem& sys);

/// E[x(t) x(t+τ)ᵀ] - mean terms: Σ e^{Aᵀτ} for τ >= 0 and e^{A|τ|} Σ for τ < 0.
Matrix lagged_covariance(const LtiSystem& sys, double tau);
/// Same, reusing a precomputed stationary covariance.
Matrix lagged_covariance(const LtiSystem& sys, const Matrix& stationary, double tau);

/// Stationary mean -A⁻¹ m.
Vector mean_response(const LtiSystem& sys);

// ---------------------------------------------------------------------------
// Mode models

/// Lower bound on the angular frequency of a complex mode; keeps the chart
/// away from the real/complex transition.
inline constexpr double kMinModeFrequency = 1e-6;

struct ComplexMode {
  double alpha = 0.0;  ///< decay rate
  double omega = 0.0;  ///< angular frequency
};

struct ModeSpec {
  std::vector<double> real_rates;
  std::vector<ComplexMode> complex_modes;

  std::size_t real_count() const { return real_rates.size(); }
  std::size_t complex_count() const { return complex_modes.size(); }
  /// N = N_R + 2 N_C
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(real_rates.size() + 2 * complex_modes.size()); }
  /// Column of B / row of D where mode `mode` starts (real modes first).
  Eigen::Index column_of(std::size_t mode) const;
  std::size_t mode_count() const { return real_rates.size() + complex_modes.size(); }
  bool is_complex(std::size_t mode) const { return mode >= real_rates.size(); }
};

/// Observation map from mode coordinates to channels. pins[j] is the channel
/// whose entry of mode j is fixed to +1 (real) or (+1, 0) (complex).
struct ModeShapes {
  Matrix b;
  std::vector<int> pins;
};

struct ModeModel {
  ModeSpec spec;
  ModeShapes shapes;
  Matrix noise_factor;  ///< Λ, lower triangular; Q = Λ Λᵀ drives the modes
  Vector channel_means;
  Vector meas_noise;  ///< per-channel measurement variance

  Eigen::Index channels() const { return shapes.b.rows(); }
  Matrix driving_covariance() const { return noise_factor * noise_factor.transpose(); }
};

/// Throws InvalidModel describing the first violated invariant.
void validate(const ModeModel& model, bool check_pins = true);

/// Block-diagonal drift: -λ for real modes, [[-α, -ω], [ω, -α]] for complex ones.
Matrix mode_block_diagonal(const ModeSpec& spec);

struct ModeRealization {
  LtiSystem system;  ///< (D, Q) over mode coordinates
  Matrix observation;
  Vector channel_means;
  Vector meas_noise;
};

ModeRealization mode_realize(const ModeModel& model);

/// Mode covariance S = solve_lyapunov(D, Q).
Matrix mode_stationary_covariance(const ModeModel& model);

/// B S e^{Dᵀτ} Bᵀ for τ >= 0, transposed for τ < 0.
Matrix mode_covariance(const ModeModel& model, double tau);

/// Sorts modes (real by λ, complex by α then ω, ties by pinned channel),
/// permuting B and re-factorizing Q accordingly.
ModeModel canonicalize(const ModeModel& model);

/// S = e^R for symmetric R, and its inverse for positive-definite S.
Matrix covariance_from_log(const Matrix& r);
Matrix log_from_covariance(const Matrix& s);

// ---------------------------------------------------------------------------
// Parameter-space accounting for k PMUs (M = 2k-1 channels: one frequency per
// PMU and one phase difference per spanning-tree edge).

struct ParameterDimension {
  int rates = 0;          ///< N_R + 2 N_C
  int shapes = 0;         ///< N_R (M-1) + N_C (2M-2)
  int covariance = 0;     ///< N (N+1) / 2
  int mean_frequency = 1;
  int mean_phases = 0;    ///< k - 1
  int total = 0;
};

/// Itemized count; throws std::logic_error if it disagrees with the closed forms.
ParameterDimension parameter_dimension(int real_modes, int complex_modes, int pmus);
/// N (2k + (N-1)/2) + k
int dimension_closed_form(int modes_dim, int pmus);
/// (N+1)(M + N/2) for M observation components, the count without the AC
/// equal-mean-frequency reduction.
int dimension_general(int modes_dim, int channels);

}  // namespace modesleuth
