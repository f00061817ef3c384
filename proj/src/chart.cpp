#include "modesleuth/chart.hpp"

#include <cmath>
#include <set>

#include "modesleuth/errors.hpp"

namespace modesleuth {

namespace {

bool is_pinned(const ModeSpec& spec, const std::vector<int>& pins, Eigen::Index row, Eigen::Index col) {
  for (std::size_t j = 0; j < spec.mode_count(); ++j) {
    const Eigen::Index c = spec.column_of(j);
    if (row != pins[j]) continue;
    if (col == c) return true;
    if (spec.is_complex(j) && col == c + 1) return true;
  }
  return false;
}

ModeSpec skeleton(std::size_t nr, std::size_t nc) {
  ModeSpec s;
  s.real_rates.assign(nr, 1.0);
  s.complex_modes.assign(nc, ComplexMode{1.0, 1.0});
  return s;
}

}  // namespace

ModeChart::ModeChart(std::size_t real_modes, std::size_t complex_modes, Eigen::Index channels, std::vector<int> pins,
                     ChartOptions options)
    : real_modes_(real_modes),
      complex_modes_(complex_modes),
      channels_(channels),
      pins_(std::move(pins)),
      options_(std::move(options)) {
  if (channels_ < 1) throw Error(Errc::invalid_model, "chart needs at least one channel");
  if (pins_.size() != real_modes_ + complex_modes_) throw Error(Errc::invalid_model, "one pin per mode required");
  for (int p : pins_) {
    if (p < 0 || p >= channels_) throw Error(Errc::invalid_model, "pin channel out of range");
  }
  if (options_.mean_groups.empty()) {
    options_.mean_groups.resize(static_cast<std::size_t>(channels_));
    for (Eigen::Index c = 0; c < channels_; ++c) options_.mean_groups[static_cast<std::size_t>(c)] = static_cast<int>(c);
  }
  if (static_cast<Eigen::Index>(options_.mean_groups.size()) != channels_) {
    throw Error(Errc::invalid_model, "mean_groups needs one entry per channel");
  }
  std::set<int> groups(options_.mean_groups.begin(), options_.mean_groups.end());
  mean_count_ = static_cast<Eigen::Index>(groups.size());
  if (*groups.begin() != 0 || *groups.rbegin() != mean_count_ - 1) {
    throw Error(Errc::invalid_model, "mean groups must be numbered 0..G-1");
  }
  if (options_.noise_floor.size() == 0) options_.noise_floor = Vector::Zero(channels_);
  if (options_.noise_floor.size() != channels_ || (options_.noise_floor.array() < 0).any()) {
    throw Error(Errc::invalid_model, "noise floor must be nonnegative, one per channel");
  }
  if (!options_.fit_noise &&
      (options_.fixed_noise.size() != channels_ || (options_.fixed_noise.array() < 0).any())) {
    throw Error(Errc::invalid_model, "fixed noise must be nonnegative, one per channel");
  }

  const ModeSpec spec = skeleton(real_modes_, complex_modes_);
  const Eigen::Index n = state_dim();
  kinds_.assign(real_modes_, ParamKind::rate);
  for (std::size_t j = 0; j < complex_modes_; ++j) {
    kinds_.push_back(ParamKind::rate);
    kinds_.push_back(ParamKind::frequency);
  }
  shape_offset_ = static_cast<Eigen::Index>(kinds_.size());
  for (Eigen::Index col = 0; col < n; ++col) {
    for (Eigen::Index row = 0; row < channels_; ++row) {
      if (is_pinned(spec, pins_, row, col)) continue;
      free_shapes_.emplace_back(row, col);
      kinds_.push_back(ParamKind::shape);
    }
  }
  lambda_offset_ = static_cast<Eigen::Index>(kinds_.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) kinds_.push_back(i == j ? ParamKind::lambda_diagonal : ParamKind::lambda_offdiagonal);
  }
  mean_offset_ = static_cast<Eigen::Index>(kinds_.size());
  kinds_.insert(kinds_.end(), static_cast<std::size_t>(mean_count_), ParamKind::mean);
  noise_offset_ = static_cast<Eigen::Index>(kinds_.size());
  if (options_.fit_noise) kinds_.insert(kinds_.end(), static_cast<std::size_t>(channels_), ParamKind::noise);
  dimension_ = static_cast<Eigen::Index>(kinds_.size());
}

ModeChart ModeChart::for_model(const ModeModel& model, ChartOptions options) {
  return ModeChart(model.spec.real_count(), model.spec.complex_count(), model.channels(), model.shapes.pins,
                   std::move(options));
}

std::size_t ModeChart::mode_of_state(Eigen::Index col) const {
  const auto c = static_cast<std::size_t>(col);
  return c < real_modes_ ? c : real_modes_ + (c - real_modes_) / 2;
}

int ModeChart::mean_of(Eigen::Index channel) const { return options_.mean_groups[static_cast<std::size_t>(channel)]; }

std::string ModeChart::label(Eigen::Index i) const {
  const auto idx = static_cast<std::size_t>(i);
  if (idx < real_modes_) return "log_lambda[" + std::to_string(idx) + "]";
  if (i < shape_offset_) {
    const std::size_t m = (idx - real_modes_) / 2;
    return ((idx - real_modes_) % 2 ? "log_omega[" : "log_alpha[") + std::to_string(m) + "]";
  }
  if (i < lambda_offset_) {
    const auto [r, c] = free_shapes_[static_cast<std::size_t>(i - shape_offset_)];
    return "B[" + std::to_string(r) + "," + std::to_string(c) + "]";
  }
  if (i < mean_offset_) {
    Eigen::Index k = i - lambda_offset_, row = 0;
    while (k > row) k -= ++row;
    return (k == row ? "log_Lambda[" : "Lambda[") + std::to_string(row) + "," + std::to_string(k) + "]";
  }
  if (i < noise_offset_) return "mean[" + std::to_string(i - mean_offset_) + "]";
  return "log_noise[" + std::to_string(i - noise_offset_) + "]";
}

Vector ModeChart::pack(const ModeModel& model) const {
  validate(model);
  if (model.spec.real_count() != real_modes_ || model.spec.complex_count() != complex_modes_ ||
      model.channels() != channels_ || model.shapes.pins != pins_) {
    throw Error(Errc::invalid_model, "model does not belong to this chart");
  }
  Vector theta(dimension_);
  Eigen::Index k = 0;
  for (double r : model.spec.real_rates) theta(k++) = std::log(r);
  for (const auto& c : model.spec.complex_modes) {
    theta(k++) = std::log(c.alpha);
    if (c.omega <= kMinModeFrequency) throw Error(Errc::invalid_model, "complex mode frequency below the chart floor");
    theta(k++) = std::log(c.omega - kMinModeFrequency);
  }
  for (const auto& [r, c] : free_shapes_) theta(k++) = model.shapes.b(r, c);
  const Eigen::Index n = state_dim();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = model.noise_factor(i, j);
      if (i == j && !(v > 0.0)) throw Error(Errc::invalid_model, "Lambda diagonal must be positive in the chart");
      theta(k++) = i == j ? std::log(v) : v;
    }
  }
  Vector means = Vector::Constant(mean_count_, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index c = 0; c < channels_; ++c) {
    double& slot = means(mean_of(c));
    if (std::isnan(slot)) {
      slot = model.channel_means(c);
    } else if (slot != model.channel_means(c)) {
      throw Error(Errc::invalid_model, "channels sharing a mean have different means");
    }
  }
  theta.segment(k, mean_count_) = means;
  k += mean_count_;
  for (Eigen::Index c = 0; c < channels_; ++c) {
    const double h = model.meas_noise(c);
    if (options_.fit_noise) {
      const double excess = h - options_.noise_floor(c);
      if (!(excess > 0.0)) throw Error(Errc::invalid_model, "noise variance must exceed its floor");
      theta(k++) = std::log(excess);
    } else if (h != options_.fixed_noise(c)) {
      throw Error(Errc::invalid_model, "noise differs from the chart's fixed noise");
    }
  }
  return theta;
}

ModeModel ModeChart::unpack(const Vector& theta) const {
  if (theta.size() != dimension_) throw Error(Errc::invalid_input, "theta has the wrong length");
  if (!theta.allFinite()) throw Error(Errc::invalid_input, "theta has non-finite entries");
  ModeModel m;
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < real_modes_; ++j) m.spec.real_rates.push_back(std::exp(theta(k++)));
  for (std::size_t j = 0; j < complex_modes_; ++j) {
    const double alpha = std::exp(theta(k++));
    m.spec.complex_modes.push_back({alpha, kMinModeFrequency + std::exp(theta(k++))});
  }
  const Eigen::Index n = state_dim();
  m.shapes.pins = pins_;
  m.shapes.b = Matrix::Zero(channels_, n);
  for (std::size_t j = 0; j < m.spec.mode_count(); ++j) m.shapes.b(pins_[j], m.spec.column_of(j)) = 1.0;
  for (const auto& [r, c] : free_shapes_) m.shapes.b(r, c) = theta(k++);
  m.noise_factor = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      m.noise_factor(i, j) = i == j ? std::exp(theta(k)) : theta(k);
      ++k;
    }
  }
  m.channel_means.resize(channels_);
  for (Eigen::Index c = 0; c < channels_; ++c) m.channel_means(c) = theta(mean_offset_ + mean_of(c));
  k = noise_offset_;
  m.meas_noise.resize(channels_);
  for (Eigen::Index c = 0; c < channels_; ++c) {
    m.meas_noise(c) = options_.fit_noise ? options_.noise_floor(c) + std::exp(theta(k++)) : options_.fixed_noise(c);
  }
  return m;
}

ChannelModel ModeChart::channel_model(const Vector& theta, bool with_derivatives) const {
  const ModeModel m = unpack(theta);
  const Eigen::Index n = state_dim();
  ChannelModel cm;
  cm.drift = mode_block_diagonal(m.spec);
  cm.forcing = m.driving_covariance();
  cm.observation = m.shapes.b;
  cm.offsets = m.channel_means;
  cm.noise = m.meas_noise;
  if (!with_derivatives) return cm;

  cm.derivatives.resize(static_cast<std::size_t>(dimension_));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < real_modes_; ++j, ++k) {
    const auto c = static_cast<Eigen::Index>(j);
    Matrix d = Matrix::Zero(n, n);
    d(c, c) = -m.spec.real_rates[j];
    cm.derivatives[static_cast<std::size_t>(k)].drift = std::move(d);
  }
  for (std::size_t j = 0; j < complex_modes_; ++j) {
    const Eigen::Index c = m.spec.column_of(real_modes_ + j);
    const ComplexMode& mode = m.spec.complex_modes[j];
    Matrix da = Matrix::Zero(n, n);
    da(c, c) = da(c + 1, c + 1) = -mode.alpha;
    cm.derivatives[static_cast<std::size_t>(k++)].drift = std::move(da);
    Matrix dw = Matrix::Zero(n, n);
    const double scale = mode.omega - kMinModeFrequency;
    dw(c, c + 1) = -scale;
    dw(c + 1, c) = scale;
    cm.derivatives[static_cast<std::size_t>(k++)].drift = std::move(dw);
  }
  for (const auto& [r, c] : free_shapes_) {
    Matrix d = Matrix::Zero(channels_, n);
    d(r, c) = 1.0;
    cm.derivatives[static_cast<std::size_t>(k++)].observation = std::move(d);
  }
  const Matrix& l = m.noise_factor;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      // dQ = dΛ Λᵀ + Λ dΛᵀ with dΛ = e_i e_jᵀ (times Λ_ii on the log diagonal)
      const double s = i == j ? l(i, i) : 1.0;
      Matrix dq = Matrix::Zero(n, n);
      dq.row(i) += s * l.col(j).transpose();
      dq.col(i) += s * l.col(j);
      cm.derivatives[static_cast<std::size_t>(k++)].forcing = std::move(dq);
    }
  }
  for (Eigen::Index g = 0; g < mean_count_; ++g) {
    Vector d = Vector::Zero(channels_);
    for (Eigen::Index c = 0; c < channels_; ++c) {
      if (mean_of(c) == g) d(c) = 1.0;
    }
    cm.derivatives[static_cast<std::size_t>(k++)].offsets = std::move(d);
  }
  if (options_.fit_noise) {
    for (Eigen::Index c = 0; c < channels_; ++c) {
      Vector d = Vector::Zero(channels_);
      d(c) = m.meas_noise(c) - options_.noise_floor(c);
      cm.derivatives[static_cast<std::size_t>(k++)].noise = std::move(d);
    }
  }
  return cm;
}

}  // namespace modesleuth
