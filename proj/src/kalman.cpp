#include "modesleuth/kalman.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "modesleuth/errors.hpp"

namespace modesleuth {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Factored {
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;
  bool jittered = false;
};

// Factorizes an innovation covariance, adding 1e-12 trace/d to the diagonal
// once if the plain factorization fails.
Factored factor_innovation(Matrix& f) {
  Factored out;
  out.llt.compute(f);
  if (out.llt.info() != Eigen::Success || !(out.llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
    const double jitter = 1e-12 * f.trace() / static_cast<double>(f.rows());
    if (!(jitter > 0.0)) throw Error(Errc::singular_innovation, "innovation covariance is singular");
    f.diagonal().array() += jitter;
    out.llt.compute(f);
    out.jittered = true;
    if (out.llt.info() != Eigen::Success || !(out.llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
      throw Error(Errc::singular_innovation, "innovation covariance is singular after jitter");
    }
  }
  out.log_det = 2.0 * out.llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

void check_slot(const ObservationSlot& slot, Eigen::Index n, const Vector& y) {
  const Eigen::Index d = slot.selector.rows();
  if (d < 1) throw Error(Errc::invalid_scheme, "observation must have at least one component");
  if (slot.selector.cols() != n || slot.offset.size() != d || slot.noise.rows() != d || slot.noise.cols() != d ||
      y.size() != d) {
    throw Error(Errc::invalid_scheme, "observation dimensions are inconsistent");
  }
}

// e^{Aᵀτ} through an eigendecomposition of A, for evaluating many lags.
class LagPropagator {
 public:
  explicit LagPropagator(const Matrix& a) : a_(a) {
    if (a.rows() == 0) return;
    Eigen::EigenSolver<Matrix> eig(a.transpose());
    values_ = eig.eigenvalues();
    vectors_ = eig.eigenvectors();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(vectors_);
    inverse_ = lu.inverse();
    const Eigen::MatrixXcd rebuilt = vectors_ * values_.asDiagonal() * inverse_;
    const double err = (rebuilt.real() - a.transpose()).norm();
    diagonalizable_ = std::isfinite(err) && err <= 1e-10 * std::max(1.0, a.norm());
  }

  Matrix transpose_exp(double tau) const {
    if (a_.rows() == 0) return Matrix(0, 0);
    if (!diagonalizable_) return expm(a_.transpose(), tau);
    const Eigen::VectorXcd w = (values_ * tau).array().exp();
    return (vectors_ * w.asDiagonal() * inverse_).real();
  }

 private:
  Matrix a_;
  Eigen::VectorXcd values_;
  Eigen::MatrixXcd vectors_;
  Eigen::MatrixXcd inverse_;
  bool diagonalizable_ = false;
};

}  // namespace

double gaussian_logpdf(const Vector& residual, const Matrix& cov) {
  const auto d = static_cast<double>(residual.size());
  if (residual.size() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
    throw Error(Errc::not_psd, "joint covariance is not positive definite");
  }
  const Vector white = llt.matrixL().solve(residual);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (white.squaredNorm() + log_det + d * kLog2Pi);
}

FilterState init_stationary(const LtiSystem& sys) {
  FilterState s;
  s.x = mean_response(sys);
  s.p = stationary_covariance(sys);
  return s;
}

Prediction predict(const FilterState& state, const LtiSystem& sys, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(Errc::invalid_times, "prediction interval must be positive");
  const Discretization disc = van_loan_discretize(sys.drift(), sys.forcing(), tau);
  Prediction pred;
  pred.x = disc.transition * state.x;
  if (sys.has_mean_forcing()) {
    const Vector mu = mean_response(sys);
    pred.x += mu - disc.transition * mu;
  }
  pred.p = symmetrize(disc.transition * state.p * disc.transition.transpose() + disc.noise);
  return pred;
}

UpdateResult update(const Prediction& pred, const ObservationSlot& slot, const Vector& y) {
  const Eigen::Index n = pred.x.size();
  check_slot(slot, n, y);
  const Matrix& z = slot.selector;
  UpdateResult out;
  StepReport& rep = out.report;
  rep.innovation = y - (z * pred.x + slot.offset);
  const Matrix pzt = pred.p * z.transpose();
  rep.innovation_cov = symmetrize(z * pzt + slot.noise);
  const Factored f = factor_innovation(rep.innovation_cov);
  rep.jittered = f.jittered;
  // K = P Zᵀ F⁻¹
  rep.gain = f.llt.solve(pzt.transpose()).transpose();
  out.x = pred.x + rep.gain * rep.innovation;
  const Matrix i_kz = Matrix::Identity(n, n) - rep.gain * z;
  out.p = symmetrize(i_kz * pred.p * i_kz.transpose() + rep.gain * slot.noise * rep.gain.transpose());
  const Vector white = f.llt.matrixL().solve(rep.innovation);
  const auto d = static_cast<double>(y.size());
  rep.evidence_gain = -0.5 * (white.squaredNorm() + f.log_det + d * kLog2Pi);
  return out;
}

StepResult step(const FilterState& state, const LtiSystem& sys, const ObservationRecord& record, double forget) {
  if (!(forget >= 0.0)) throw Error(Errc::invalid_input, "forgetting rate must be >= 0");
  double tau = 0.0;
  Prediction pred;
  if (state.t_last) {
    tau = record.time - *state.t_last;
    if (!(tau > 0.0)) throw Error(Errc::invalid_times, "record time does not increase");
    pred = predict(state, sys, tau);
  } else {
    pred = {state.x, state.p};
  }
  UpdateResult up = update(pred, record, record.value);
  StepResult out;
  out.state.t_last = record.time;
  out.state.x = std::move(up.x);
  out.state.p = std::move(up.p);
  const double eps = up.report.evidence_gain;
  out.state.evidence = state.evidence + eps;
  const double decay = state.t_last ? std::exp(-forget * tau) : 0.0;
  out.state.discounted = decay * state.discounted + eps;
  out.report = std::move(up.report);
  return out;
}

double batch_evidence(const LtiSystem& sys, std::span<const ObservationRecord> records) {
  FilterState state = init_stationary(sys);
  for (const auto& rec : records) state = step(state, sys, rec).state;
  return state.evidence;
}

double dense_gp_loglik(const std::function<Matrix(double)>& lagged, const Vector& state_mean,
                       std::span<const ObservationRecord> records) {
  std::vector<Eigen::Index> start(records.size() + 1, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    check_slot(records[i], state_mean.size(), records[i].value);
    start[i + 1] = start[i] + records[i].selector.rows();
  }
  const Eigen::Index total = start.back();
  if (total > 2000) throw Error(Errc::invalid_input, "dense oracle limited to 2000 observation components");
  Matrix cov(total, total);
  Vector resid(total);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& ri = records[i];
    const Eigen::Index di = ri.selector.rows();
    resid.segment(start[i], di) = ri.value - (ri.selector * state_mean + ri.offset);
    for (std::size_t j = i; j < records.size(); ++j) {
      const auto& rj = records[j];
      const Eigen::Index dj = rj.selector.rows();
      const double tau = rj.time - ri.time;
      if (tau < 0.0) throw Error(Errc::invalid_times, "records must be time ordered");
      Matrix block = ri.selector * lagged(tau) * rj.selector.transpose();
      if (i == j) block += ri.noise;
      cov.block(start[i], start[j], di, dj) = block;
      cov.block(start[j], start[i], dj, di) = block.transpose();
    }
  }
  return gaussian_logpdf(resid, cov);
}

double dense_gp_loglik(const LtiSystem& sys, std::span<const ObservationRecord> records) {
  const Matrix sigma = stationary_covariance(sys);
  const LagPropagator prop(sys.drift());
  const auto lagged = [&](double tau) -> Matrix {
    if (tau == 0.0) return sigma;
    return sigma * prop.transpose_exp(tau);
  };
  return dense_gp_loglik(lagged, mean_response(sys), records);
}

}  // namespace modesleuth
