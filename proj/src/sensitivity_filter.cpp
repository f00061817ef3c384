#include "modesleuth/sensitivity_filter.hpp"

#include <cmath>
#include <numbers>

#include "modesleuth/errors.hpp"

namespace modesleuth {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr std::size_t kCacheCapacity = 8;
// Relative change of the filtered covariance (and its sensitivities) below
// which the recursion is considered to sit at its fixed point.
constexpr double kFixedPointTol = 1e-13;
constexpr int kFixedPointRepeats = 2;
// Spacings within this relative distance share a discretization; evenly
// sampled timestamps differ from an exact multiple of dt in the last bits.
constexpr double kSpacingTol = 1e-9;

bool same_spacing(double a, double b) { return std::abs(a - b) <= kSpacingTol * std::max(a, b); }

bool is_zero(const Matrix& m) { return m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0; }

Matrix or_zero(const Matrix& m, Eigen::Index r, Eigen::Index c) { return m.size() == 0 ? Matrix::Zero(r, c) : m; }

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void check_model(const ChannelModel& m) {
  const Eigen::Index n = m.drift.rows();
  const Eigen::Index c = m.observation.rows();
  if (m.drift.cols() != n || m.forcing.rows() != n || m.forcing.cols() != n || m.observation.cols() != n ||
      m.offsets.size() != c || m.noise.size() != c) {
    throw Error(Errc::invalid_model, "channel model dimensions are inconsistent");
  }
  for (const auto& d : m.derivatives) {
    if ((d.drift.size() && (d.drift.rows() != n || d.drift.cols() != n)) ||
        (d.forcing.size() && (d.forcing.rows() != n || d.forcing.cols() != n)) ||
        (d.observation.size() && (d.observation.rows() != c || d.observation.cols() != n)) ||
        (d.offsets.size() && d.offsets.size() != c) || (d.noise.size() && d.noise.size() != c)) {
      throw Error(Errc::invalid_model, "model derivative dimensions are inconsistent");
    }
  }
}

}  // namespace

SensitivityFilter::SensitivityFilter(ChannelModel model, double forget) : model_(std::move(model)), forget_(forget) {
  if (!(forget_ >= 0.0)) throw Error(Errc::invalid_input, "forgetting rate must be >= 0");
  check_model(model_);
  const Eigen::Index n = model_.state_dim();
  const std::size_t np = model_.parameters();
  if (!is_stable(model_.drift).stable) throw Error(Errc::unstable_system, "drift is not asymptotically stable");
  x_ = Vector::Zero(n);
  dx_.assign(np, Vector::Zero(n));
  dp_.assign(np, Matrix::Zero(n, n));
  if (n > 0) {
    const LyapunovSolver lyap(model_.drift);
    p_ = lyap.solve(model_.forcing);
    for (std::size_t k = 0; k < np; ++k) {
      const auto& d = model_.derivatives[k];
      Matrix rhs = or_zero(d.forcing, n, n);
      if (!is_zero(d.drift)) rhs += d.drift * p_ + p_ * d.drift.transpose();
      if (!is_zero(rhs)) dp_[k] = lyap.solve(rhs);
    }
  } else {
    p_ = Matrix(0, 0);
  }
  d_evidence_ = Vector::Zero(static_cast<Eigen::Index>(np));
  d_discounted_ = Vector::Zero(static_cast<Eigen::Index>(np));
  cache_.reserve(kCacheCapacity);
}

void SensitivityFilter::rebind(ChannelModel model) {
  check_model(model);
  if (model.state_dim() != model_.state_dim() || model.parameters() != model_.parameters()) {
    throw Error(Errc::invalid_model, "rebind must keep state and parameter dimensions");
  }
  model_ = std::move(model);
  cache_.clear();
  cache_next_ = 0;
  frozen_.reset();
  stable_repeats_ = 0;
  last_tau_.reset();
}

const SensitivityFilter::CachedDiscretization& SensitivityFilter::discretization(double tau) {
  for (const auto& c : cache_) {
    if (same_spacing(c.tau, tau)) return c;
  }
  const Eigen::Index n = model_.state_dim();
  std::vector<Matrix> da, dk;
  da.reserve(model_.parameters());
  dk.reserve(model_.parameters());
  for (const auto& d : model_.derivatives) {
    da.push_back(or_zero(d.drift, n, n));
    dk.push_back(or_zero(d.forcing, n, n));
  }
  auto full = van_loan_with_derivatives(model_.drift, model_.forcing, da, dk, tau);
  CachedDiscretization entry;
  entry.tau = tau;
  entry.phi = std::move(full.value.transition);
  entry.noise = std::move(full.value.noise);
  for (auto& d : full.derivatives) {
    entry.dphi.push_back(std::move(d.transition));
    entry.dnoise.push_back(std::move(d.noise));
  }
  if (cache_.size() < kCacheCapacity) {
    cache_.push_back(std::move(entry));
    return cache_.back();
  }
  CachedDiscretization& slot = cache_[cache_next_];
  cache_next_ = (cache_next_ + 1) % kCacheCapacity;
  slot = std::move(entry);
  return slot;
}

GradientStepReport SensitivityFilter::step(const ChannelRecord& record) {
  const auto d = static_cast<Eigen::Index>(record.channels.size());
  if (d == 0 || record.values.size() != d) throw Error(Errc::invalid_scheme, "record channel/value counts differ");
  for (int c : record.channels) {
    if (c < 0 || c >= model_.channels()) throw Error(Errc::invalid_scheme, "channel index out of range");
  }
  double tau = 0.0;
  if (t_last_) {
    tau = record.time - *t_last_;
    if (!(tau > 0.0)) throw Error(Errc::invalid_times, "record time does not increase");
  }

  GradientStepReport rep;
  const bool same_signature = t_last_ && last_tau_ && same_spacing(*last_tau_, tau) && last_channels_ == record.channels;
  if (frozen_ && !(same_signature && same_spacing(frozen_->tau, tau) && frozen_->channels == record.channels)) {
    frozen_.reset();
    stable_repeats_ = 0;
  }
  if (frozen_) {
    frozen_step(record, rep);
    ++frozen_steps_;
  } else {
    full_step(record, tau, rep);
  }

  const double decay = t_last_ ? std::exp(-forget_ * tau) : 0.0;
  evidence_ += rep.evidence_gain;
  discounted_ = decay * discounted_ + rep.evidence_gain;
  d_evidence_ += rep.d_evidence_gain;
  d_discounted_ = decay * d_discounted_ + rep.d_evidence_gain;
  last_tau_ = t_last_ ? std::optional<double>(tau) : std::nullopt;
  last_channels_ = record.channels;
  t_last_ = record.time;
  return rep;
}

void SensitivityFilter::full_step(const ChannelRecord& record, double tau, GradientStepReport& rep) {
  const Eigen::Index n = model_.state_dim();
  const std::size_t np = model_.parameters();
  const auto d = static_cast<Eigen::Index>(record.channels.size());

  // Prediction.
  const CachedDiscretization* disc = t_last_ ? &discretization(tau) : nullptr;
  Vector xp;
  Matrix pp;
  std::vector<Vector> dxp(np);
  std::vector<Matrix> dpp(np);
  if (disc) {
    xp = disc->phi * x_;
    pp = symmetrize(disc->phi * p_ * disc->phi.transpose() + disc->noise);
    for (std::size_t k = 0; k < np; ++k) {
      dxp[k] = disc->dphi[k] * x_ + disc->phi * dx_[k];
      const Matrix cross = disc->dphi[k] * p_ * disc->phi.transpose();
      dpp[k] = symmetrize(cross + cross.transpose() + disc->phi * dp_[k] * disc->phi.transpose() + disc->dnoise[k]);
    }
  } else {
    xp = x_;
    pp = p_;
    dxp = dx_;
    dpp = dp_;
  }

  // Observation pieces for the selected channels.
  Matrix z(d, n);
  Vector off(d);
  Vector h(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const int c = record.channels[static_cast<std::size_t>(i)];
    z.row(i) = model_.observation.row(c);
    off(i) = model_.offsets(c);
    h(i) = model_.noise(c);
  }
  std::vector<Matrix> dz(np);
  std::vector<Vector> doff(np);
  std::vector<Vector> dh(np);
  for (std::size_t k = 0; k < np; ++k) {
    const auto& der = model_.derivatives[k];
    dz[k] = Matrix::Zero(d, n);
    doff[k] = Vector::Zero(d);
    dh[k] = Vector::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const int c = record.channels[static_cast<std::size_t>(i)];
      if (der.observation.size()) dz[k].row(i) = der.observation.row(c);
      if (der.offsets.size()) doff[k](i) = der.offsets(c);
      if (der.noise.size()) dh[k](i) = der.noise(c);
    }
  }

  // Update.
  const Vector v = record.values - z * xp - off;
  const Matrix pzt = pp * z.transpose();
  Matrix f = symmetrize(z * pzt);
  f.diagonal() += h;
  Eigen::LLT<Matrix> llt(f);
  bool jittered = false;
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
    const double jitter = 1e-12 * f.trace() / static_cast<double>(d);
    if (!(jitter > 0.0)) throw Error(Errc::singular_innovation, "innovation covariance is singular");
    f.diagonal().array() += jitter;
    llt.compute(f);
    jittered = true;
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
      throw Error(Errc::singular_innovation, "innovation covariance is singular after jitter");
    }
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Matrix finv = llt.solve(Matrix::Identity(d, d));
  const Matrix gain = pzt * finv;
  const Vector finv_v = finv * v;

  const Vector x_new = xp + gain * v;
  const Matrix i_kz = Matrix::Identity(n, n) - gain * z;
  const Matrix p_new = symmetrize(i_kz * pp * i_kz.transpose() + gain * h.asDiagonal() * gain.transpose());

  rep.evidence_gain = -0.5 * (v.dot(finv_v) + log_det + static_cast<double>(d) * kLog2Pi);
  rep.jittered = jittered;
  rep.d_evidence_gain = Vector::Zero(static_cast<Eigen::Index>(np));

  std::vector<Vector> dx_new(np);
  std::vector<Matrix> dp_new(np);
  std::vector<Matrix> dgain(np);
  std::vector<Matrix> fdf(np);
  std::vector<double> trace_fdf(np);
  for (std::size_t k = 0; k < np; ++k) {
    const Vector dv = -(dz[k] * xp + z * dxp[k] + doff[k]);
    const Matrix dpzt = dpp[k] * z.transpose() + pp * dz[k].transpose();
    Matrix df = z * dpzt + dz[k] * pzt;
    df = symmetrize(df);
    df.diagonal() += dh[k];
    dgain[k] = (dpzt - gain * df) * finv;
    dx_new[k] = dxp[k] + dgain[k] * v + gain * dv;
    const Matrix corr = dgain[k] * pzt.transpose() + gain * dpzt.transpose();
    // d(Pp - K PZtᵀ) = dPp - dK PZtᵀ - K dPZtᵀ; the last two terms are not
    // individually symmetric but their sum is.
    dp_new[k] = symmetrize(dpp[k] - corr);
    fdf[k] = finv * df * finv;
    trace_fdf[k] = (finv.cwiseProduct(df)).sum();
    rep.d_evidence_gain(static_cast<Eigen::Index>(k)) =
        -0.5 * (2.0 * finv_v.dot(dv) - v.dot(fdf[k] * v) + trace_fdf[k]);
  }

  // Fixed-point detection for repeated (τ, channel set) signatures.
  const bool same_signature = t_last_ && last_tau_ && same_spacing(*last_tau_, tau) && last_channels_ == record.channels;
  bool converged = same_signature;
  if (converged) {
    const double scale = std::max(max_abs(p_new), 1e-300);
    converged = max_abs(p_new - p_) <= kFixedPointTol * scale;
    for (std::size_t k = 0; converged && k < np; ++k) {
      const double s = std::max(max_abs(dp_new[k]), scale);
      converged = max_abs(dp_new[k] - dp_[k]) <= kFixedPointTol * s;
    }
  }
  stable_repeats_ = converged ? stable_repeats_ + 1 : 0;

  x_ = x_new;
  p_ = p_new;
  dx_ = std::move(dx_new);
  dp_ = std::move(dp_new);

  if (stable_repeats_ >= kFixedPointRepeats && disc) {
    Frozen fr;
    fr.tau = tau;
    fr.channels = record.channels;
    fr.phi = disc->phi;
    fr.dphi = disc->dphi;
    fr.z = z;
    fr.dz = std::move(dz);
    fr.offsets = off;
    fr.doffsets = std::move(doff);
    fr.finv = finv;
    fr.log_det = log_det;
    fr.gain = gain;
    fr.dgain = std::move(dgain);
    fr.finv_df_finv = std::move(fdf);
    fr.trace_finv_df = std::move(trace_fdf);
    fr.jittered = jittered;
    frozen_ = std::move(fr);
  }
}

void SensitivityFilter::frozen_step(const ChannelRecord& record, GradientStepReport& rep) {
  const Frozen& fr = *frozen_;
  const std::size_t np = model_.parameters();
  const auto d = static_cast<Eigen::Index>(record.channels.size());
  const Vector xp = fr.phi * x_;
  const Vector v = record.values - fr.z * xp - fr.offsets;
  const Vector finv_v = fr.finv * v;
  rep.evidence_gain = -0.5 * (v.dot(finv_v) + fr.log_det + static_cast<double>(d) * kLog2Pi);
  rep.d_evidence_gain.resize(static_cast<Eigen::Index>(np));
  rep.jittered = fr.jittered;
  rep.frozen = true;
  Vector dxp(x_.size());
  Vector dv(d);
  for (std::size_t k = 0; k < np; ++k) {
    dxp.noalias() = fr.dphi[k] * x_;
    dxp.noalias() += fr.phi * dx_[k];
    dv.noalias() = -(fr.dz[k] * xp);
    dv.noalias() -= fr.z * dxp;
    dv -= fr.doffsets[k];
    rep.d_evidence_gain(static_cast<Eigen::Index>(k)) =
        -0.5 * (2.0 * finv_v.dot(dv) - v.dot(fr.finv_df_finv[k] * v) + fr.trace_finv_df[k]);
    dx_[k] = dxp;
    dx_[k].noalias() += fr.dgain[k] * v;
    dx_[k].noalias() += fr.gain * dv;
  }
  x_ = xp + fr.gain * v;
}

EvidenceGradient evidence_with_gradient(const ChannelModel& model, std::span<const ChannelRecord> records) {
  SensitivityFilter filter(model);
  for (const auto& r : records) filter.step(r);
  return {filter.evidence(), filter.d_evidence()};
}

double channel_evidence(const ChannelModel& model, std::span<const ChannelRecord> records) {
  ChannelModel plain = model;
  plain.derivatives.clear();
  SensitivityFilter filter(std::move(plain));
  for (const auto& r : records) filter.step(r);
  return filter.evidence();
}

}  // namespace modesleuth
