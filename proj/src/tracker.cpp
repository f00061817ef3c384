#include "modesleuth/tracker.hpp"

#include <cmath>

#include "modesleuth/errors.hpp"

namespace modesleuth {

namespace {

TrackOptions checked(TrackOptions o) {
  if (!(o.forget >= 0.0) || !std::isfinite(o.forget)) throw Error(Errc::invalid_input, "forgetting rate must be >= 0");
  if (o.forget == 0.0 && !o.decaying_step) {
    throw Error(Errc::invalid_input, "a positive forgetting rate is required unless step sizes decay");
  }
  if (!(o.step > 0.0) || !(o.max_step > 0.0) || !(o.decay_records > 0.0)) {
    throw Error(Errc::invalid_input, "step sizes must be positive");
  }
  return o;
}

}  // namespace

StreamTracker::StreamTracker(ModeChart chart, Vector theta0, TrackOptions options)
    : chart_(std::move(chart)),
      theta_(std::move(theta0)),
      options_(checked(std::move(options))),
      filter_(chart_.channel_model(theta_), options_.forget),
      curvature_(Matrix::Zero(theta_.size(), theta_.size())),
      gradient_(Vector::Zero(theta_.size())),
      eta_(options_.step) {
  if (options_.prior && options_.prior->mean.size() != chart_.dimension()) {
    throw Error(Errc::invalid_input, "prior dimension does not match the chart");
  }
}

TrackPoint StreamTracker::push(const ChannelRecord& record) {
  const GradientStepReport rep = filter_.step(record);
  if (!t0_) t0_ = record.time;
  const double tau = t_last_ ? record.time - *t_last_ : 0.0;
  t_last_ = record.time;
  ++records_;

  // Discounted gradient at the current θ: the previous sum is carried to the
  // new point with the diagonal curvature before the new record is added.
  const double decay = std::exp(-options_.forget * tau);
  const Vector& g = rep.d_evidence_gain;
  curvature_ *= decay;
  if (options_.full_curvature) {
    curvature_.noalias() += g * g.transpose();
  } else {
    curvature_.diagonal() += g.cwiseAbs2();
  }
  gradient_ = decay * gradient_ + g;
  Vector grad = gradient_;
  Matrix curv = curvature_;
  curv.diagonal().array() += options_.curvature_floor;
  if (options_.prior) {
    const double w = std::exp(-options_.forget * (record.time - *t0_));
    grad += w * options_.prior->gradient(theta_);
    curv.diagonal() += w * options_.prior->curvature();
  }
  double eta = eta_;
  if (options_.decaying_step) eta /= 1.0 + static_cast<double>(records_ - 1) / options_.decay_records;
  if (records_ <= options_.warmup) eta = 0.0;

  TrackPoint out;
  out.time = record.time;
  out.discounted = filter_.discounted();
  out.evidence_gain = rep.evidence_gain;
  if (eta == 0.0) {
    out.theta = theta_;
    return out;
  }
  Vector delta = eta * (options_.full_curvature ? Vector(curv.ldlt().solve(grad)) : grad.cwiseQuotient(curv.diagonal()));
  const double big = delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0;
  if (big > options_.max_step) delta *= options_.max_step / big;
  const Vector next = theta_ + delta;
  bool ok = next.allFinite();
  if (ok) {
    try {
      filter_.rebind(chart_.channel_model(next));
    } catch (const Error&) {
      ok = false;
    }
  }
  if (ok) {
    theta_ = next;
    gradient_ -= curvature_ * delta + options_.curvature_floor * delta;
  } else {
    ++rejected_;
    eta_ *= 0.5;
    out.rejected = true;
    if (options_.log) {
      options_.log("tracker: rejected step at t=" + std::to_string(record.time) + ", step size now " +
                   std::to_string(eta_));
    }
  }
  out.theta = theta_;
  return out;
}

std::vector<TrackPoint> track_stream(const ModeChart& chart, const Vector& theta0, std::span<const ChannelRecord> records,
                                     const TrackOptions& options) {
  StreamTracker tracker(chart, theta0, options);
  std::vector<TrackPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(tracker.push(r));
  return out;
}

nlohmann::json track_point_json(const ModeChart& chart, const TrackPoint& point) {
  const ModeModel m = chart.unpack(point.theta);
  nlohmann::json omega = nlohmann::json::array(), alpha = nlohmann::json::array();
  for (const auto& c : m.spec.complex_modes) {
    omega.push_back(c.omega);
    alpha.push_back(c.alpha);
  }
  return {{"t", point.time},
          {"omega", omega},
          {"alpha", alpha},
          {"lambda", m.spec.real_rates},
          {"L_disc", point.discounted}};
}

}  // namespace modesleuth
