#include "modesleuth/lsp_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "modesleuth/errors.hpp"

namespace modesleuth {

LtiSystem::LtiSystem(Matrix drift, Matrix forcing, Vector mean_forcing)
    : drift_(std::move(drift)), forcing_(std::move(forcing)), mean_forcing_(std::move(mean_forcing)) {
  const Eigen::Index n = drift_.rows();
  if (drift_.cols() != n || forcing_.rows() != n || forcing_.cols() != n) {
    throw Error(Errc::invalid_input, "drift and forcing must be square and of equal size");
  }
  if (mean_forcing_.size() == 0) mean_forcing_ = Vector::Zero(n);
  if (mean_forcing_.size() != n) throw Error(Errc::invalid_input, "mean forcing has the wrong length");
  if (!all_finite(drift_) || !all_finite(forcing_) || !mean_forcing_.allFinite()) {
    throw Error(Errc::invalid_input, "system has non-finite entries");
  }
  if (!is_stable(drift_).stable) throw Error(Errc::unstable_system, "drift is not asymptotically stable");
  if (n > 0) {
    const double scale = std::max(1.0, forcing_.cwiseAbs().maxCoeff());
    if ((forcing_ - forcing_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
      throw Error(Errc::not_psd, "forcing covariance is not symmetric");
    }
    if (min_eigenvalue(forcing_) < -1e-10 * std::abs(forcing_.trace())) {
      throw Error(Errc::not_psd, "forcing covariance is indefinite");
    }
    forcing_ = symmetrize(forcing_);
  }
}

Matrix stationary_covariance(const LtiSystem& sys) {
  if (sys.dimension() == 0) return Matrix(0, 0);
  return LyapunovSolver(sys.drift()).solve(sys.forcing());
}

Matrix lagged_covariance(const LtiSystem& sys, const Matrix& stationary, double tau) {
  if (tau == 0.0) return stationary;
  if (tau > 0.0) return stationary * expm(sys.drift().transpose(), tau);
  // Computed as the transpose of the positive lag so that C(-τ) = C(τ)ᵀ holds exactly.
  return (stationary * expm(sys.drift().transpose(), -tau)).transpose();
}

Matrix lagged_covariance(const LtiSystem& sys, double tau) {
  return lagged_covariance(sys, stationary_covariance(sys), tau);
}

Vector mean_response(const LtiSystem& sys) {
  if (sys.dimension() == 0) return Vector(0);
  if (!sys.has_mean_forcing()) return Vector::Zero(sys.dimension());
  return -sys.drift().partialPivLu().solve(sys.mean_forcing());
}

// ---------------------------------------------------------------------------

Eigen::Index ModeSpec::column_of(std::size_t mode) const {
  if (mode < real_rates.size()) return static_cast<Eigen::Index>(mode);
  return static_cast<Eigen::Index>(real_rates.size() + 2 * (mode - real_rates.size()));
}

void validate(const ModeModel& model, bool check_pins) {
  const auto fail = [](const std::string& why) { throw Error(Errc::invalid_model, why); };
  const ModeSpec& spec = model.spec;
  const Eigen::Index n = spec.dimension();
  const Eigen::Index m = model.shapes.b.rows();
  for (double r : spec.real_rates) {
    if (!(r > 0.0) || !std::isfinite(r)) fail("real mode rates must be positive");
  }
  for (const auto& c : spec.complex_modes) {
    if (!(c.alpha > 0.0) || !std::isfinite(c.alpha)) fail("complex mode decay rates must be positive");
    if (!(c.omega >= kMinModeFrequency) || !std::isfinite(c.omega)) fail("complex mode frequency below the minimum");
  }
  if (model.shapes.b.cols() != n) fail("B has " + std::to_string(model.shapes.b.cols()) + " columns, expected " + std::to_string(n));
  if (m < 1) fail("at least one channel is required");
  if (model.noise_factor.rows() != n || model.noise_factor.cols() != n) fail("noise factor has the wrong shape");
  if (model.channel_means.size() != m) fail("channel_means has the wrong length");
  if (model.meas_noise.size() != m) fail("meas_noise has the wrong length");
  if (!model.shapes.b.allFinite() || !model.noise_factor.allFinite() || !model.channel_means.allFinite() ||
      !model.meas_noise.allFinite()) {
    fail("model has non-finite entries");
  }
  if ((model.meas_noise.array() < 0.0).any()) fail("measurement variances must be nonnegative");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (model.noise_factor(i, j) != 0.0) fail("noise factor must be lower triangular");
    }
  }
  if (!check_pins) return;
  if (model.shapes.pins.size() != spec.mode_count()) fail("one pin per mode is required");
  for (std::size_t j = 0; j < spec.mode_count(); ++j) {
    const int pin = model.shapes.pins[j];
    if (pin < 0 || pin >= m) fail("pin index out of range");
    const Eigen::Index col = spec.column_of(j);
    if (std::abs(model.shapes.b(pin, col) - 1.0) > 1e-12) fail("pinned shape entry must be +1");
    if (spec.is_complex(j) && std::abs(model.shapes.b(pin, col + 1)) > 1e-12) {
      fail("pinned quadrature entry of a complex mode must be 0");
    }
  }
}

Matrix mode_block_diagonal(const ModeSpec& spec) {
  const Eigen::Index n = spec.dimension();
  Matrix d = Matrix::Zero(n, n);
  Eigen::Index at = 0;
  for (double lambda : spec.real_rates) {
    d(at, at) = -lambda;
    ++at;
  }
  for (const auto& c : spec.complex_modes) {
    d(at, at) = -c.alpha;
    d(at, at + 1) = -c.omega;
    d(at + 1, at) = c.omega;
    d(at + 1, at + 1) = -c.alpha;
    at += 2;
  }
  return d;
}

ModeRealization mode_realize(const ModeModel& model) {
  validate(model, false);
  return {LtiSystem(mode_block_diagonal(model.spec), model.driving_covariance()), model.shapes.b,
          model.channel_means, model.meas_noise};
}

Matrix mode_stationary_covariance(const ModeModel& model) {
  const Eigen::Index n = model.spec.dimension();
  if (n == 0) return Matrix(0, 0);
  return LyapunovSolver(mode_block_diagonal(model.spec)).solve(model.driving_covariance());
}

Matrix mode_covariance(const ModeModel& model, double tau) {
  if (tau < 0.0) return mode_covariance(model, -tau).transpose();
  const Matrix& b = model.shapes.b;
  if (model.spec.dimension() == 0) return Matrix::Zero(b.rows(), b.rows());
  const Matrix s = mode_stationary_covariance(model);
  if (tau == 0.0) return symmetrize(b * s * b.transpose());
  const Matrix d = mode_block_diagonal(model.spec);
  return b * s * expm(d.transpose(), tau) * b.transpose();
}

ModeModel canonicalize(const ModeModel& model) {
  const ModeSpec& spec = model.spec;
  const std::size_t nr = spec.real_count();
  const std::size_t nc = spec.complex_count();
  const auto pin_of = [&](std::size_t mode) { return mode < model.shapes.pins.size() ? model.shapes.pins[mode] : 0; };

  std::vector<std::size_t> real_order(nr);
  std::iota(real_order.begin(), real_order.end(), 0);
  std::stable_sort(real_order.begin(), real_order.end(), [&](std::size_t a, std::size_t b) {
    if (spec.real_rates[a] != spec.real_rates[b]) return spec.real_rates[a] < spec.real_rates[b];
    return pin_of(a) < pin_of(b);
  });
  std::vector<std::size_t> complex_order(nc);
  std::iota(complex_order.begin(), complex_order.end(), 0);
  std::stable_sort(complex_order.begin(), complex_order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = spec.complex_modes[a];
    const auto& cb = spec.complex_modes[b];
    if (ca.alpha != cb.alpha) return ca.alpha < cb.alpha;
    if (ca.omega != cb.omega) return ca.omega < cb.omega;
    return pin_of(nr + a) < pin_of(nr + b);
  });

  ModeModel out = model;
  const Eigen::Index n = spec.dimension();
  std::vector<Eigen::Index> column_source;  // new column -> old column
  column_source.reserve(static_cast<std::size_t>(n));
  out.shapes.pins.assign(spec.mode_count(), 0);
  for (std::size_t i = 0; i < nr; ++i) {
    out.spec.real_rates[i] = spec.real_rates[real_order[i]];
    out.shapes.pins[i] = pin_of(real_order[i]);
    column_source.push_back(spec.column_of(real_order[i]));
  }
  for (std::size_t i = 0; i < nc; ++i) {
    out.spec.complex_modes[i] = spec.complex_modes[complex_order[i]];
    out.shapes.pins[nr + i] = pin_of(nr + complex_order[i]);
    const Eigen::Index c = spec.column_of(nr + complex_order[i]);
    column_source.push_back(c);
    column_source.push_back(c + 1);
  }
  // Column j of the new basis is column column_source[j] of the old one.
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) p(column_source[static_cast<std::size_t>(j)], j) = 1.0;
  out.shapes.b = model.shapes.b * p;
  const Matrix q = p.transpose() * model.driving_covariance() * p;
  out.noise_factor = cholesky_psd(symmetrize(q), 1e-12 * std::max(1.0, q.trace())).lower;
  return out;
}

Matrix covariance_from_log(const Matrix& r) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(r));
  const Vector w = eig.eigenvalues().array().exp();
  return symmetrize(eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose());
}

Matrix log_from_covariance(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(s));
  if (s.size() > 0 && !(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(Errc::not_psd, "matrix logarithm needs a positive-definite covariance");
  }
  const Vector w = eig.eigenvalues().array().log();
  return symmetrize(eig.eigenvectors() * w.asDiagonal() * eig.eigenvectors().transpose());
}

// ---------------------------------------------------------------------------

int dimension_closed_form(int modes_dim, int pmus) {
  const int n = modes_dim;
  // N(2k + (N-1)/2) + k, kept in integers.
  return (n * (4 * pmus + n - 1)) / 2 + pmus;
}

int dimension_general(int modes_dim, int channels) {
  const int n = modes_dim;
  return ((n + 1) * (2 * channels + n)) / 2;
}

ParameterDimension parameter_dimension(int real_modes, int complex_modes, int pmus) {
  if (real_modes < 0 || complex_modes < 0 || pmus < 1) {
    throw Error(Errc::invalid_input, "mode counts must be >= 0 and PMU count >= 1");
  }
  const int n = real_modes + 2 * complex_modes;
  const int m = 2 * pmus - 1;
  ParameterDimension d;
  d.rates = real_modes + 2 * complex_modes;
  d.shapes = real_modes * (m - 1) + complex_modes * (2 * m - 2);
  d.covariance = n * (n + 1) / 2;
  d.mean_frequency = 1;
  d.mean_phases = pmus - 1;
  d.total = d.rates + d.shapes + d.covariance + d.mean_frequency + d.mean_phases;
  if (d.total != dimension_closed_form(n, pmus)) {
    throw std::logic_error("itemized parameter count disagrees with N(2k+(N-1)/2)+k");
  }
  if (d.total + (pmus - 1) != dimension_general(n, m)) {
    throw std::logic_error("itemized parameter count disagrees with (N+1)(M+N/2)");
  }
  return d;
}

}  // namespace modesleuth
