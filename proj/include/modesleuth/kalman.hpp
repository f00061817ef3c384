#pragma once

// Continuous-discrete Kalman filter over irregular times and partial
// observations, with exact evidence accumulation. Cost per record depends only
// on the state and observation dimensions.

#include <functional>
#include <optional>
#include <span>

#include "modesleuth/lsp_model.hpp"
#include "modesleuth/observations.hpp"

namespace modesleuth {

struct FilterState {
  std::optional<double> t_last;  ///< unset until the first record is absorbed
  Vector x;                      ///< x_{i|i}
  Matrix p;                      ///< P_{i|i}
  double evidence = 0.0;         ///< L_i, nats
  double discounted = 0.0;       ///< discounted evidence rate
};

struct Prediction {
  Vector x;
  Matrix p;
};

struct StepReport {
  Vector innovation;
  Matrix innovation_cov;
  Matrix gain;
  double evidence_gain = 0.0;
  bool jittered = false;
};

struct UpdateResult {
  Vector x;
  Matrix p;
  StepReport report;
};

struct StepResult {
  FilterState state;
  StepReport report;
};

/// Stationary prior: x = mean_response, P = stationary covariance.
FilterState init_stationary(const LtiSystem& sys);

/// Propagates (x, P) over τ > 0 with the exact discretization.
Prediction predict(const FilterState& state, const LtiSystem& sys, double tau);

/// Conditions a prediction on y = Z x + m + ξ. Joseph-form covariance update.
UpdateResult update(const Prediction& pred, const ObservationSlot& slot, const Vector& y);

/// predict + update + evidence bookkeeping. `forget` is the discount rate λ >= 0.
StepResult step(const FilterState& state, const LtiSystem& sys, const ObservationRecord& record, double forget = 0.0);

/// Evidence of a record sequence starting from the stationary prior.
double batch_evidence(const LtiSystem& sys, std::span<const ObservationRecord> records);

/// Dense Gaussian log density of all observations jointly (test oracle; cubic
/// in the total observation dimension). `lagged(τ)` returns E[x(t) x(t+τ)ᵀ]
/// minus the mean product for τ >= 0.
double dense_gp_loglik(const std::function<Matrix(double)>& lagged, const Vector& state_mean,
                       std::span<const ObservationRecord> records);
double dense_gp_loglik(const LtiSystem& sys, std::span<const ObservationRecord> records);

/// −½ (rᵀ C⁻¹ r + log det C + d log 2π); throws NotPsd when C is not positive definite.
double gaussian_logpdf(const Vector& residual, const Matrix& cov);

}  // namespace modesleuth
