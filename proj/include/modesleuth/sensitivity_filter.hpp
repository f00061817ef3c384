#pragma once

// Kalman evidence with forward parameter sensitivities for channel models
// y_c(t) = O[c,:] x(t) + m_c + ξ_c, ξ_c ~ N(0, h_c) independent per channel.
//
// Every record costs O(P n³) for P parameters while the covariance recursion
// is still moving. When consecutive records repeat the same spacing and
// channel set and the filtered covariance (with its sensitivities) has stopped
// changing to roundoff, the covariance recursion is frozen at its fixed point
// and only the O(P n²) mean recursion runs.

#include <optional>
#include <span>
#include <vector>

#include "modesleuth/lsp_model.hpp"
#include "modesleuth/observations.hpp"

namespace modesleuth {

/// Derivative of each model ingredient with respect to one parameter. Empty
/// members stand for zero.
struct ModelDerivative {
  Matrix drift;
  Matrix forcing;
  Matrix observation;
  Vector offsets;
  Vector noise;
};

struct ChannelModel {
  Matrix drift;
  Matrix forcing;
  Matrix observation;  ///< channels × n
  Vector offsets;
  Vector noise;        ///< per-channel measurement variance
  std::vector<ModelDerivative> derivatives;

  Eigen::Index state_dim() const { return drift.rows(); }
  Eigen::Index channels() const { return observation.rows(); }
  std::size_t parameters() const { return derivatives.size(); }
};

struct GradientStepReport {
  double evidence_gain = 0.0;
  Vector d_evidence_gain;  ///< ∂εᵢ/∂θ
  bool jittered = false;
  bool frozen = false;     ///< covariance recursion was at its fixed point
};

class SensitivityFilter {
 public:
  /// Starts from the stationary prior of `model` (x = 0, P = S) with
  /// sensitivities ∂S/∂θ from the differentiated Lyapunov equation.
  SensitivityFilter(ChannelModel model, double forget = 0.0);

  /// Absorbs one record (strictly after the previous one).
  GradientStepReport step(const ChannelRecord& record);

  /// Replaces the model (e.g. after a parameter update) keeping the current
  /// state and sensitivities; discards cached discretizations.
  void rebind(ChannelModel model);

  double evidence() const { return evidence_; }
  double discounted() const { return discounted_; }
  const Vector& d_evidence() const { return d_evidence_; }
  const Vector& d_discounted() const { return d_discounted_; }
  const Vector& state_mean() const { return x_; }
  const Matrix& state_cov() const { return p_; }
  std::optional<double> last_time() const { return t_last_; }
  const ChannelModel& model() const { return model_; }
  std::size_t frozen_steps() const { return frozen_steps_; }

 private:
  struct CachedDiscretization {
    double tau = 0.0;
    Matrix phi;
    Matrix noise;
    std::vector<Matrix> dphi;
    std::vector<Matrix> dnoise;
  };

  // Everything the mean recursion needs once the covariance is stationary.
  struct Frozen {
    double tau = 0.0;
    std::vector<int> channels;
    Matrix phi;
    std::vector<Matrix> dphi;
    Matrix z;
    std::vector<Matrix> dz;
    Vector offsets;
    std::vector<Vector> doffsets;
    Matrix finv;
    double log_det = 0.0;
    Matrix gain;
    std::vector<Matrix> dgain;
    std::vector<Matrix> finv_df_finv;
    std::vector<double> trace_finv_df;
    bool jittered = false;
  };

  const CachedDiscretization& discretization(double tau);
  void full_step(const ChannelRecord& record, double tau, GradientStepReport& rep);
  void frozen_step(const ChannelRecord& record, GradientStepReport& rep);

  ChannelModel model_;
  double forget_;
  std::optional<double> t_last_;
  Vector x_;
  Matrix p_;
  std::vector<Vector> dx_;
  std::vector<Matrix> dp_;
  double evidence_ = 0.0;
  double discounted_ = 0.0;
  Vector d_evidence_;
  Vector d_discounted_;

  std::vector<CachedDiscretization> cache_;
  std::size_t cache_next_ = 0;

  // fixed-point detection
  std::optional<double> last_tau_;
  std::vector<int> last_channels_;
  int stable_repeats_ = 0;
  std::optional<Frozen> frozen_;
  std::size_t frozen_steps_ = 0;
};

/// Evidence and its gradient for a whole record sequence.
struct EvidenceGradient {
  double evidence = 0.0;
  Vector gradient;
};

EvidenceGradient evidence_with_gradient(const ChannelModel& model, std::span<const ChannelRecord> records);

/// Evidence only (no sensitivities), same recursion.
double channel_evidence(const ChannelModel& model, std::span<const ChannelRecord> records);

}  // namespace modesleuth
