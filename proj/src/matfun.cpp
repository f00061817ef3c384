#include "modesleuth/matfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "modesleuth/errors.hpp"

namespace modesleuth {
namespace {

using CMatrix = Eigen::MatrixXcd;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw Error(Errc::invalid_input, std::string(what) + " must be square");
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) throw Error(Errc::invalid_input, std::string(what) + " has non-finite entries");
}

// Solves T Y + Y R = C for upper-triangular complex T and R, column by column.
CMatrix triangular_sylvester(const CMatrix& t, const CMatrix& r, CMatrix c) {
  const Eigen::Index n = t.rows();
  const Eigen::Index m = r.rows();
  CMatrix y(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::VectorXcd rhs = c.col(j);
    for (Eigen::Index i = 0; i < j; ++i) rhs -= r(i, j) * y.col(i);
    CMatrix shifted = t;
    shifted.diagonal().array() += r(j, j);
    y.col(j) = shifted.triangularView<Eigen::Upper>().solve(rhs);
  }
  return y;
}

struct Schur {
  CMatrix u;
  CMatrix t;
};

Schur complex_schur(const Matrix& a) {
  Eigen::ComplexSchur<CMatrix> schur(a.cast<std::complex<double>>());
  return {schur.matrixU(), schur.matrixT()};
}

double spectrum_gap(const CMatrix& t, const CMatrix& r) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.rows(); ++j) gap = std::min(gap, std::abs(t(i, i) + r(j, j)));
  }
  return gap;
}

// Number of halvings so that |A|_1 h <= 1/2; the doubling recursion for (Φ, G)
// then never exponentiates a block with a large growing e^{-Aᵀh} corner.
int halvings_for(const Matrix& a, double tau) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff() * tau;
  if (!(norm > 0.5)) return 0;
  return static_cast<int>(std::ceil(std::log2(norm / 0.5)));
}

Matrix van_loan_block(const Matrix& a, const Matrix& k, double h) {
  const Eigen::Index n = a.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a * h;
  block.topRightCorner(n, n) = k * h;
  block.bottomRightCorner(n, n) = -a.transpose() * h;
  return block;
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

Matrix expm(const Matrix& a, double t) {
  require_square(a, "expm argument");
  require_finite(a, "expm argument");
  if (!std::isfinite(t)) throw Error(Errc::invalid_input, "expm time is not finite");
  const Eigen::Index n = a.rows();
  if (n == 0 || t == 0.0) return Matrix::Identity(n, n);
  Matrix scaled = a * t;
  return scaled.exp();
}

StabilityReport is_stable(const Matrix& a) {
  require_square(a, "drift");
  if (a.rows() == 0) return {true, std::numeric_limits<double>::infinity()};
  Eigen::EigenSolver<Matrix> eig(a, false);
  const double max_real = eig.eigenvalues().real().maxCoeff();
  return {max_real < 0.0, -max_real};
}

Matrix solve_sylvester(const Matrix& a, const Matrix& jm, const Matrix& c) {
  require_square(a, "A");
  require_square(jm, "Jm");
  if (c.rows() != a.rows() || c.cols() != jm.rows()) {
    throw Error(Errc::invalid_input, "Sylvester right-hand side has the wrong shape");
  }
  require_finite(a, "A");
  require_finite(jm, "Jm");
  require_finite(c, "C");
  if (a.size() == 0 || jm.size() == 0) return Matrix::Zero(c.rows(), c.cols());

  const Schur sa = complex_schur(a);
  const Schur sj = complex_schur(jm);
  const double scale = a.norm() + jm.norm();
  if (!(spectrum_gap(sa.t, sj.t) > 1e-8 * scale)) {
    throw Error(Errc::spectrum_overlap, "A and -Jm share an eigenvalue");
  }
  const CMatrix rhs = sa.u.adjoint() * c.cast<std::complex<double>>() * sj.u;
  const CMatrix y = triangular_sylvester(sa.t, sj.t, rhs);
  return (sa.u * y * sj.u.adjoint()).real();
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& k) {
  require_square(a, "A");
  require_square(k, "K");
  if (k.rows() != a.rows()) throw Error(Errc::invalid_input, "A and K dimensions differ");
  require_finite(a, "A");
  require_finite(k, "K");
  if (a.rows() == 0) return Matrix(0, 0);
  if (!is_stable(a).stable) throw Error(Errc::unstable_system, "drift has an eigenvalue with Re >= 0");
  const double sym_tol = 1e-10 * std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
    throw Error(Errc::not_psd, "forcing covariance is not symmetric");
  }
  const double trace = std::abs(k.trace());
  if (min_eigenvalue(k) < -1e-10 * trace) throw Error(Errc::not_psd, "forcing covariance is indefinite");
  return LyapunovSolver(a).solve(k);
}

LyapunovSolver::LyapunovSolver(const Matrix& a) : n_(a.rows()) {
  require_square(a, "A");
  if (n_ == 0) return;
  const Schur s = complex_schur(a);
  u_ = s.u;
  t_ = s.t;
}

Matrix LyapunovSolver::solve(const Matrix& q) const {
  if (n_ == 0) return Matrix(0, 0);
  // With A = U T Uᴴ and X = U Y Uᵀ the equation becomes T Y + Y Tᵀ = -Uᴴ Q conj(U),
  // solved from the bottom-right corner since T is upper triangular.
  const CMatrix rhs = -(u_.adjoint() * q.cast<std::complex<double>>() * u_.conjugate());
  CMatrix y(n_, n_);
  for (Eigen::Index i = n_ - 1; i >= 0; --i) {
    for (Eigen::Index j = n_ - 1; j >= 0; --j) {
      std::complex<double> acc = rhs(i, j);
      for (Eigen::Index p = i + 1; p < n_; ++p) acc -= t_(i, p) * y(p, j);
      for (Eigen::Index p = j + 1; p < n_; ++p) acc -= y(i, p) * t_(j, p);
      y(i, j) = acc / (t_(i, i) + t_(j, j));
    }
  }
  return symmetrize((u_ * y * u_.transpose()).real());
}

Discretization van_loan_discretize(const Matrix& a, const Matrix& k, double tau) {
  require_square(a, "A");
  require_square(k, "K");
  if (k.rows() != a.rows()) throw Error(Errc::invalid_input, "A and K dimensions differ");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error(Errc::invalid_input, "interval must be finite and >= 0");
  require_finite(a, "A");
  require_finite(k, "K");
  const Eigen::Index n = a.rows();
  if (tau == 0.0 || n == 0) return {Matrix::Identity(n, n), Matrix::Zero(n, n)};

  const int s = halvings_for(a, tau);
  const double h = std::ldexp(tau, -s);
  const Matrix e = van_loan_block(a, k, h).exp();
  Matrix phi = e.topLeftCorner(n, n);
  Matrix g = symmetrize(e.topRightCorner(n, n) * phi.transpose());
  for (int i = 0; i < s; ++i) {
    g = symmetrize(phi * g * phi.transpose() + g);
    phi = phi * phi;
  }
  return {std::move(phi), std::move(g)};
}

DiscretizationWithDerivatives van_loan_with_derivatives(const Matrix& a, const Matrix& k,
                                                       std::span<const Matrix> da,
                                                       std::span<const Matrix> dk, double tau) {
  if (da.size() != dk.size()) throw Error(Errc::invalid_input, "derivative direction lists differ in length");
  const Eigen::Index n = a.rows();
  DiscretizationWithDerivatives out;
  out.value = van_loan_discretize(a, k, tau);
  out.derivatives.resize(da.size());
  if (tau == 0.0 || n == 0) {
    for (auto& d : out.derivatives) d = {Matrix::Zero(n, n), Matrix::Zero(n, n)};
    return out;
  }

  const int s = halvings_for(a, tau);
  const double h = std::ldexp(tau, -s);
  const Matrix base = van_loan_block(a, k, h);
  const Matrix e = base.exp();
  const Matrix phi_h = e.topLeftCorner(n, n);
  const Matrix x_h = e.topRightCorner(n, n);
  const Matrix g_h = symmetrize(x_h * phi_h.transpose());

  for (std::size_t p = 0; p < da.size(); ++p) {
    const bool has_da = da[p].size() != 0 && da[p].cwiseAbs().maxCoeff() != 0.0;
    const bool has_dk = dk[p].size() != 0 && dk[p].cwiseAbs().maxCoeff() != 0.0;
    auto& d = out.derivatives[p];
    if (!has_da && !has_dk) {
      d = {Matrix::Zero(n, n), Matrix::Zero(n, n)};
      continue;
    }
    if (!has_da) {
      // Φ does not move; G is linear in K.
      d = {Matrix::Zero(n, n), van_loan_discretize(a, dk[p], tau).noise};
      continue;
    }
    const Matrix dkp = has_dk ? dk[p] : Matrix::Zero(n, n);
    // exp([[M, dM],[0, M]]) has the Fréchet derivative of exp at M along dM
    // in its upper-right block.
    Matrix frechet = Matrix::Zero(4 * n, 4 * n);
    frechet.topLeftCorner(2 * n, 2 * n) = base;
    frechet.bottomRightCorner(2 * n, 2 * n) = base;
    frechet.topRightCorner(2 * n, 2 * n) = van_loan_block(da[p], dkp, h);
    const Matrix de = frechet.exp().topRightCorner(2 * n, 2 * n);
    Matrix dphi = de.topLeftCorner(n, n);
    const Matrix dx = de.topRightCorner(n, n);
    Matrix dg = symmetrize(dx * phi_h.transpose() + x_h * dphi.transpose());
    Matrix phi = phi_h;
    Matrix g = g_h;
    for (int i = 0; i < s; ++i) {
      const Matrix cross = dphi * g * phi.transpose();
      dg = symmetrize(cross + cross.transpose() + phi * dg * phi.transpose() + dg);
      g = symmetrize(phi * g * phi.transpose() + g);
      dphi = dphi * phi + phi * dphi;
      phi = phi * phi;
    }
    d = {std::move(dphi), std::move(dg)};
  }
  return out;
}

PsdFactor cholesky_psd(const Matrix& s, double tol) {
  require_square(s, "covariance");
  require_finite(s, "covariance");
  const Eigen::Index n = s.rows();
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > std::max(tol, 1e-12 * s.cwiseAbs().maxCoeff())) {
    throw Error(Errc::not_psd, "matrix is not symmetric");
  }
  if (n == 0) return {Matrix(0, 0)};
  const double trace = s.trace();
  if (min_eigenvalue(s) < -tol * std::abs(trace)) throw Error(Errc::not_psd, "matrix has a negative eigenvalue");

  Matrix l = Matrix::Zero(n, n);
  const double pivot_floor = std::max(tol, 1e-14 * std::abs(trace)) * 1e-2;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = s(j, j) - l.row(j).head(j).squaredNorm();
    if (d <= pivot_floor) continue;  // semidefinite direction: zero column
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (s(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return {std::move(l)};
}

}  // namespace modesleuth
