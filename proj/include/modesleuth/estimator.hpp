#pragma once

// Batch fitting of mode models: a weakly informative prior on the chart,
// multi-start quasi-Newton ascent of the log posterior, Laplace evidence and
// model comparison over mode counts.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modesleuth/chart.hpp"
#include "modesleuth/observations.hpp"

namespace modesleuth {

using Logger = std::function<void(std::string_view)>;

/// Per-channel statistics of a record set.
struct DataSummary {
  Eigen::Index channels = 0;
  std::size_t records = 0;
  Eigen::Index observations = 0;  ///< total scalar observations
  double duration = 0.0;
  double median_dt = 0.0;
  Vector mean;
  Vector variance;
  std::vector<Eigen::Index> counts;

  /// Variance, or max(mean², 1) for a channel that never moves.
  double scale(Eigen::Index c) const;
};

/// Throws InvalidInput for an empty record set or channel indices out of range.
DataSummary summarize(std::span<const ChannelRecord> records, Eigen::Index channels);

/// Noise floor 1e-10 × scale per channel.
Vector default_noise_floor(const DataSummary& summary);

/// Independent Gaussian on every chart coordinate (so log-normal on rates,
/// frequencies, Λ diagonal and noise excess; Gaussian on shapes, Λ
/// off-diagonal and means).
struct Prior {
  Vector mean;
  Vector sd;

  double log_density(const Vector& theta) const;
  Vector gradient(const Vector& theta) const;
  /// −∂²/∂θ² of the log density, i.e. 1/sd².
  Vector curvature() const;
};

/// Rates and frequencies centred on the geometric mean of the lowest resolved
/// and the Nyquist angular frequency (log-sd 2); shapes sd 10 relative to the
/// pinned channel; Λ diagonal centred on the amplitude that reproduces the
/// pinned channel's variance (log-sd 3); means around the sample means; noise
/// centred on 1% of the channel scale (log-sd 4).
Prior default_prior(const ModeChart& chart, const DataSummary& summary);

struct ModeFamily {
  std::size_t real = 0;
  std::size_t complex = 0;

  /// N = N_R + 2 N_C
  std::size_t dimension() const { return real + 2 * complex; }
  std::string label() const;
  bool operator==(const ModeFamily&) const = default;
};

/// Starting model from the cross spectrum: ω at spectral peaks, α from the
/// half width at half maximum, complex shapes from the dominant eigenvector at
/// each peak, real rates from the low-frequency knee. Pins go to the channel
/// with the largest normalized participation. Needs at least 64 resampled
/// points. Missing peaks are filled with seeded log-spaced frequencies.
ModeModel init_heuristic(const ModeFamily& family, Eigen::Index channels, std::span<const ChannelRecord> records,
                         std::uint64_t seed = 0, const Logger& log = {});

struct FitOptions {
  int starts = 8;
  int max_iterations = 200;
  double gradient_tol = 1e-5;  ///< max |∂/∂θ| of the log posterior, nats
  double value_tol = 1e-11;      ///< relative gain per step, three steps in a row
  double value_abs_tol = 1e-6;   ///< absolute gain per step (nats), three steps in a row
  std::uint64_t seed = 0;
  int threads = 1;
  ChartOptions chart;             ///< empty noise floor means default_noise_floor
  bool use_prior = true;          ///< false gives a plain maximum-likelihood fit
  std::optional<Prior> prior;     ///< overrides default_prior
  std::optional<ModeModel> start; ///< overrides init_heuristic (its pins define the chart)
  Logger log;
};

struct StartReport {
  int start = 0;
  double log_posterior = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

struct FitResult {
  explicit FitResult(ModeChart c) : chart(std::move(c)) {}

  ModeChart chart;
  ModeFamily family;
  Vector theta;
  ModeModel model;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double log_posterior = 0.0;
  Matrix hessian;  ///< of the log posterior, symmetric
  Vector posterior_sd;
  bool negative_definite = false;
  double laplace_log_z = 0.0;  ///< NaN when the Hessian is not negative definite
  double bic = 0.0;            ///< L − (d/2) log(observations)
  Eigen::Index observations = 0;
  std::vector<StartReport> starts;
  int best_start = 0;
};

/// Throws NoConvergence when no start yields a finite log posterior.
FitResult fit_mle(const ModeFamily& family, Eigen::Index channels, std::span<const ChannelRecord> records,
                  const FitOptions& options = {});

/// Log posterior, its gradient and the log likelihood at θ; −inf when the
/// model is numerically invalid there.
struct Objective {
  double log_posterior = 0.0;
  double log_likelihood = 0.0;
  Vector gradient;
};
Objective evaluate_objective(const ModeChart& chart, const Prior* prior, std::span<const ChannelRecord> records,
                             const Vector& theta);

struct CandidateResult {
  ModeFamily family;
  double log_z = 0.0;  ///< Laplace value, or BIC when flagged
  bool used_bic = false;
  double probability = 0.0;
  FitResult fit;
};

struct ModelPosterior {
  std::vector<CandidateResult> candidates;
  /// Highest log Z, except that any candidate within 1 nat with smaller N wins.
  std::size_t selected = 0;
};

/// Fits every candidate and converts log Z into posterior probabilities under
/// equal model priors. Start seeds depend on the family, not its position.
ModelPosterior compare_models(std::span<const ModeFamily> candidates, Eigen::Index channels,
                              std::span<const ChannelRecord> records, const FitOptions& options = {});

}  // namespace modesleuth
