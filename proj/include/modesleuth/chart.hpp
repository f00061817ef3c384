#pragma once

// Unconstrained coordinates θ for a fixed mode family and pin choice.
//
// Layout: log λ per real mode; (log α, log(ω - ω_min)) per complex mode; the
// free entries of B column by column (pinned entries skipped); Λ packed by rows
// with log diagonal; channel means (optionally shared across channel groups);
// log(h_c - floor_c) per channel when the noise is fitted.

#include <string>
#include <vector>

#include "modesleuth/lsp_model.hpp"
#include "modesleuth/sensitivity_filter.hpp"

namespace modesleuth {

struct ChartOptions {
  /// mean_groups[c] is the mean parameter used by channel c; empty means one per channel.
  std::vector<int> mean_groups;
  bool fit_noise = true;
  /// Per-channel lower bound for fitted noise variances; empty means zero.
  Vector noise_floor;
  /// Noise variances used when fit_noise is false.
  Vector fixed_noise;
};

enum class ParamKind { rate, frequency, shape, lambda_diagonal, lambda_offdiagonal, mean, noise };

class ModeChart {
 public:
  ModeChart(std::size_t real_modes, std::size_t complex_modes, Eigen::Index channels, std::vector<int> pins,
            ChartOptions options = {});
  /// Chart whose family and pins are those of `model`.
  static ModeChart for_model(const ModeModel& model, ChartOptions options = {});

  Eigen::Index dimension() const { return dimension_; }
  Eigen::Index channels() const { return channels_; }
  Eigen::Index mean_count() const { return mean_count_; }
  std::size_t real_modes() const { return real_modes_; }
  std::size_t complex_modes() const { return complex_modes_; }
  Eigen::Index state_dim() const { return static_cast<Eigen::Index>(real_modes_ + 2 * complex_modes_); }
  const std::vector<int>& pins() const { return pins_; }
  const ChartOptions& options() const { return options_; }

  ParamKind kind(Eigen::Index i) const { return kinds_[static_cast<std::size_t>(i)]; }
  /// (row, column) of B for θ entry shape_offset() + k.
  std::pair<Eigen::Index, Eigen::Index> shape_entry(Eigen::Index k) const {
    return free_shapes_[static_cast<std::size_t>(k)];
  }
  /// Mode owning state coordinate `col` (real modes first).
  std::size_t mode_of_state(Eigen::Index col) const;
  std::string label(Eigen::Index i) const;

  /// Offsets of the blocks inside θ.
  Eigen::Index shape_offset() const { return shape_offset_; }
  Eigen::Index lambda_offset() const { return lambda_offset_; }
  Eigen::Index mean_offset() const { return mean_offset_; }
  Eigen::Index noise_offset() const { return noise_offset_; }

  /// Throws InvalidModel if the model does not fit this chart (family, pins,
  /// pinned values, shared means, fixed noise).
  Vector pack(const ModeModel& model) const;
  ModeModel unpack(const Vector& theta) const;

  /// Filter model over mode coordinates, with ∂/∂θ of every ingredient.
  ChannelModel channel_model(const Vector& theta, bool with_derivatives = true) const;

 private:
  int mean_of(Eigen::Index channel) const;

  std::size_t real_modes_;
  std::size_t complex_modes_;
  Eigen::Index channels_;
  std::vector<int> pins_;
  ChartOptions options_;
  Eigen::Index mean_count_ = 0;
  Eigen::Index dimension_ = 0;
  Eigen::Index shape_offset_ = 0;
  Eigen::Index lambda_offset_ = 0;
  Eigen::Index mean_offset_ = 0;
  Eigen::Index noise_offset_ = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> free_shapes_;  // (row, col) of B
  std::vector<ParamKind> kinds_;
};

}  // namespace modesleuth
