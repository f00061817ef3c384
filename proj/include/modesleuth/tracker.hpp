#pragma once

// Streaming maximum-likelihood tracking: after every record one preconditioned
// gradient step on the discounted evidence (plus a prior whose weight decays
// at the forgetting rate).

#include <optional>

#include <json.hpp>

#include "modesleuth/chart.hpp"
#include "modesleuth/estimator.hpp"
#include "modesleuth/sensitivity_filter.hpp"

namespace modesleuth {

struct TrackOptions {
  /// Forgetting rate λ. Must be positive unless decaying_step is set, in
  /// which case λ = 0 tracks the plain evidence.
  double forget = 0.0;
  /// Step η applied to the curvature-scaled gradient; 1 is a full diagonal
  /// Newton step on the discounted objective.
  double step = 0.5;
  /// Largest change of any θ entry per record.
  double max_step = 0.1;
  /// η_i = step / (1 + i / decay_records)
  bool decaying_step = false;
  double decay_records = 100.0;
  /// Records absorbed before the first parameter step.
  std::size_t warmup = 20;
  /// Running outer-product curvature; diagonal only unless full_curvature.
  bool full_curvature = false;
  std::optional<Prior> prior;
  double curvature_floor = 1e-8;
  Logger log;
};

struct TrackPoint {
  double time = 0.0;
  Vector theta;
  double discounted = 0.0;
  double evidence_gain = 0.0;
  bool rejected = false;  ///< the parameter step was rejected (θ unchanged)
};

class StreamTracker {
 public:
  StreamTracker(ModeChart chart, Vector theta0, TrackOptions options);

  /// Absorbs one record, then steps θ.
  TrackPoint push(const ChannelRecord& record);

  const Vector& theta() const { return theta_; }
  ModeModel model() const { return chart_.unpack(theta_); }
  const ModeChart& chart() const { return chart_; }
  double step_size() const { return eta_; }
  std::size_t records() const { return records_; }
  std::size_t rejected_steps() const { return rejected_; }
  /// Discounted evidence gradient carried to the current θ (prior excluded).
  const Vector& discounted_gradient() const { return gradient_; }
  const SensitivityFilter& filter() const { return filter_; }

 private:
  ModeChart chart_;
  Vector theta_;
  TrackOptions options_;
  SensitivityFilter filter_;
  Matrix curvature_;
  Vector gradient_;
  double eta_;
  std::optional<double> t0_;
  std::optional<double> t_last_;
  std::size_t records_ = 0;
  std::size_t rejected_ = 0;
};

std::vector<TrackPoint> track_stream(const ModeChart& chart, const Vector& theta0, std::span<const ChannelRecord> records,
                                     const TrackOptions& options);

/// {"t", "omega", "alpha", "lambda", "L_disc"} for one tracker output.
nlohmann::json track_point_json(const ModeChart& chart, const TrackPoint& point);

}  // namespace modesleuth
