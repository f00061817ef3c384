#pragma once

// Dense small-matrix functions: exponentials, Lyapunov/Sylvester solves,
// Van Loan noise integrals and psd factorizations. All functions are pure.

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace modesleuth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

bool all_finite(const Matrix& m);
Matrix symmetrize(const Matrix& m);
/// Smallest eigenvalue of the symmetric part of `m` (+inf for an empty matrix).
double min_eigenvalue(const Matrix& m);

/// e^{A t}; scaling-and-squaring with a degree-13 Padé approximant.
Matrix expm(const Matrix& a, double t = 1.0);

struct StabilityReport {
  bool stable = false;
  double margin = 0.0;  ///< -(max real part of the spectrum)
};

StabilityReport is_stable(const Matrix& a);

/// Solves A E + E Jm = C by complex Schur back-substitution.
/// Throws SpectrumOverlap when some eigenvalue of A is within
/// 1e-8 (|A|_F + |Jm|_F) of an eigenvalue of -Jm.
Matrix solve_sylvester(const Matrix& a, const Matrix& jm, const Matrix& c);

/// Symmetric Σ with A Σ + Σ Aᵀ = -K. A must be stable and K symmetric psd.
Matrix solve_lyapunov(const Matrix& a, const Matrix& k);

/// Factorizes A once and solves A X + X Aᵀ = -Q for many right-hand sides.
/// Used for the sensitivities of the stationary covariance.
class LyapunovSolver {
 public:
  explicit LyapunovSolver(const Matrix& a);

  Matrix solve(const Matrix& q) const;
  Eigen::Index dimension() const { return n_; }

 private:
  Eigen::Index n_;
  Eigen::MatrixXcd u_;
  Eigen::MatrixXcd t_;
};

/// Transition matrix and accumulated noise covariance of dx = A x dt + dW,
/// cov(dW) = K dt, over an interval τ:
///   Φ = e^{Aτ},  G = ∫₀^τ e^{As} K e^{Aᵀs} ds.
struct Discretization {
  Matrix transition;
  Matrix noise;
};

Discretization van_loan_discretize(const Matrix& a, const Matrix& k, double tau);

/// Derivatives of (Φ, G) along a direction (dA, dK) in model space.
struct DiscretizationDerivative {
  Matrix transition;
  Matrix noise;
};

struct DiscretizationWithDerivatives {
  Discretization value;
  std::vector<DiscretizationDerivative> derivatives;
};

/// Exact directional derivatives via the block-triangular Fréchet construction.
/// Directions with dA = 0 reuse the plain Van Loan integral of dK; directions
/// with dA = dK = 0 yield zero matrices without any exponential.
DiscretizationWithDerivatives van_loan_with_derivatives(const Matrix& a, const Matrix& k,
                                                       std::span<const Matrix> da,
                                                       std::span<const Matrix> dk, double tau);

struct PsdFactor {
  Matrix lower;  ///< lower triangular, nonnegative diagonal
};

/// Cholesky factor of a symmetric psd matrix. Semidefinite directions (pivots
/// below `tol`) get a zero column. Throws NotPsd when
/// min eigenvalue < -tol * trace.
PsdFactor cholesky_psd(const Matrix& s, double tol = 1e-12);

}  // namespace modesleuth
