#pragma once

// Closed-form covariance functions of the scalar processes used throughout
// the tests: Ornstein-Uhlenbeck, linear Langevin and first-order filtered OU.

#include <variant>

#include "modesleuth/lsp_model.hpp"

namespace modesleuth {

/// dx = -μ x dt + σ dW
struct OuKernel {
  double mu = 1.0;
  double sigma = 1.0;
};

/// m x'' + β x' + k x = σ ξ
struct LangevinKernel {
  double mass = 1.0;
  double damping = 1.0;
  double stiffness = 1.0;
  double sigma = 1.0;
};

/// M f' = -γ f + p,  p' = -J p + σ ξ; the kernel is that of f.
struct FouKernel {
  double inertia = 1.0;
  double damping = 1.0;
  double relaxation = 1.0;
  double sigma = 1.0;

  double gamma_rate() const { return damping / inertia; }
};

using KernelParams = std::variant<OuKernel, LangevinKernel, FouKernel>;

enum class LangevinRegime { underdamped, critical, overdamped };

LangevinRegime regime_of(const LangevinKernel& p);

/// Covariance C(τ); even in τ, C(0) is the stationary variance.
/// FOU with Γ = J (relative 1e-10) throws DegenerateRates.
double kernel_eval(const KernelParams& p, double tau);

/// State-space realization whose `observed` coordinate has the given kernel.
struct KernelRealization {
  LtiSystem system;
  Eigen::Index observed = 0;
};

KernelRealization kernel_realization(const KernelParams& p);

}  // namespace modesleuth
