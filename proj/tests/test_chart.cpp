#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "modesleuth/chart.hpp"
#include "modesleuth/errors.hpp"
#include "modesleuth/simulator.hpp"
#include "test_support.hpp"

namespace modesleuth {
namespace {

TEST(ModeChart, SingleRealModeSingleChannel) {
  const ModeChart chart(1, 0, 1, {0});
  ASSERT_EQ(chart.dimension(), 4);
  EXPECT_EQ(chart.kind(0), ParamKind::rate);
  EXPECT_EQ(chart.kind(1), ParamKind::lambda_diagonal);
  EXPECT_EQ(chart.kind(2), ParamKind::mean);
  EXPECT_EQ(chart.kind(3), ParamKind::noise);
  Vector theta(4);
  theta << std::log(2.0), std::log(3.0), 0.5, std::log(0.1);
  const ModeModel m = chart.unpack(theta);
  EXPECT_NEAR(m.spec.real_rates[0], 2.0, 1e-15);
  EXPECT_NEAR(m.noise_factor(0, 0), 3.0, 1e-15);
  EXPECT_EQ(m.channel_means(0), 0.5);
  EXPECT_NEAR(m.meas_noise(0), 0.1, 1e-15);
  EXPECT_EQ(m.shapes.b(0, 0), 1.0);
}

TEST(ModeChart, RoundTrip) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const ModeModel m = testing::random_mode_model(rng, 2, 1, 3);
    const ModeChart chart = ModeChart::for_model(m);
    const Vector theta = chart.pack(m);
    const ModeModel back = chart.unpack(theta);
    EXPECT_LT((back.shapes.b - m.shapes.b).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((back.noise_factor - m.noise_factor).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((back.meas_noise - m.meas_noise).cwiseAbs().maxCoeff(), 1e-14);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(back.spec.real_rates[j], m.spec.real_rates[j], 1e-14);
    EXPECT_NEAR(back.spec.complex_modes[0].omega, m.spec.complex_modes[0].omega, 1e-14);
    EXPECT_LT((chart.pack(back) - theta).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ModeChart, GridStyleDimensionMatchesAccounting) {
  for (int k = 1; k <= 6; ++k) {
    for (int nr = 0; nr <= 2; ++nr) {
      for (int nc = 0; nc <= 2; ++nc) {
        const int m = 2 * k - 1;
        ChartOptions opt;
        opt.mean_groups.assign(static_cast<std::size_t>(k), 0);
        for (int e = 1; e < k; ++e) opt.mean_groups.push_back(e);
        opt.fit_noise = false;
        opt.fixed_noise = Vector::Constant(m, 0.01);
        std::vector<int> pins(static_cast<std::size_t>(nr + nc), 0);
        const ModeChart chart(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc), m, pins, opt);
        EXPECT_EQ(chart.dimension(), parameter_dimension(nr, nc, k).total) << k << " " << nr << " " << nc;
      }
    }
  }
}

TEST(ModeChart, PackRejectsForeignModels) {
  std::mt19937_64 rng(52);
  ModeModel m = testing::random_mode_model(rng, 1, 1, 2);
  const ModeChart chart = ModeChart::for_model(m);
  ModeModel other = m;
  other.shapes.pins = {1, 0};
  other.shapes.b(1, 0) = 1.0;
  other.shapes.b(1, 1) = 1.0;
  other.shapes.b(0, 2) = 0.3;
  EXPECT_THROW(chart.pack(other), Error);
}

TEST(ModeChart, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(53);
  const ModeModel m = testing::random_mode_model(rng, 1, 1, 2);
  ChartOptions opt;
  opt.noise_floor = Vector::Constant(2, 0.01);
  const ModeChart chart = ModeChart::for_model(m, opt);
  const Vector theta = chart.pack(m);
  const ChannelModel cm = chart.channel_model(theta);
  for (Eigen::Index p = 0; p < chart.dimension(); ++p) {
    const double h = 1e-6;
    Vector e = Vector::Zero(chart.dimension());
    e(p) = h;
    const ChannelModel plus = chart.channel_model(theta + e, false);
    const ChannelModel minus = chart.channel_model(theta - e, false);
    const ModelDerivative& d = cm.derivatives[static_cast<std::size_t>(p)];
    auto check = [&](const Matrix& got, const Matrix& hi, const Matrix& lo, const char* what) {
      const Matrix fd = (hi - lo) / (2 * h);
      const Matrix g = got.size() ? got : Matrix::Zero(fd.rows(), fd.cols());
      EXPECT_LT((g - fd).cwiseAbs().maxCoeff(), 1e-7 * std::max(1.0, fd.cwiseAbs().maxCoeff())) << what << " " << p;
    };
    check(d.drift, plus.drift, minus.drift, "drift");
    check(d.forcing, plus.forcing, minus.forcing, "forcing");
    check(d.observation, plus.observation, minus.observation, "observation");
    check(d.offsets, plus.offsets, minus.offsets, "offsets");
    check(d.noise, plus.noise, minus.noise, "noise");
  }
}

TEST(ModeChart, EvidenceGradientAllClasses) {
  // One complex mode, two channels, 100 records.
  ModeModel m;
  m.spec.complex_modes = {{0.2, 3.0}};
  m.shapes.b = Matrix(2, 2);
  m.shapes.b << 1, 0, 0.6, -0.8;
  m.shapes.pins = {0};
  m.noise_factor = Matrix::Identity(2, 2) * 0.7;
  m.noise_factor(1, 0) = 0.2;
  m.channel_means = Vector::Constant(2, 0.3);
  m.meas_noise = Vector::Constant(2, 0.05);
  const ModeChart chart = ModeChart::for_model(m);
  const Vector theta = chart.pack(m);
  const ModeRealization r = mode_realize(m);
  const SamplePath path = sample_path(r.system, regular_times(100, 0.1), InitialCondition::stationary(), 54);
  const auto recs = observe_channels(path, m.shapes.b, m.channel_means, m.meas_noise, 55, 0.8);
  const EvidenceGradient g = evidence_with_gradient(chart.channel_model(theta), recs);
  double worst = 0.0;
  for (Eigen::Index p = 0; p < chart.dimension(); ++p) {
    const double h = 1e-5;
    Vector e = Vector::Zero(chart.dimension());
    e(p) = h;
    const double fd = (channel_evidence(chart.channel_model(theta + e, false), recs) -
                       channel_evidence(chart.channel_model(theta - e, false), recs)) /
                      (2 * h);
    worst = std::max(worst, std::abs(g.gradient(p) - fd) / std::max(1.0, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ModeChart, EvidenceInvariantUnderGauge) {
  // Rescaling a mode column by c with Λ row scaled by 1/c leaves the evidence unchanged.
  std::mt19937_64 rng(56);
  const ModeModel m = testing::random_mode_model(rng, 1, 1, 2);
  const ModeRealization r = mode_realize(m);
  const SamplePath path = sample_path(r.system, regular_times(80, 0.2), InitialCondition::stationary(), 57);
  const auto recs = observe_channels(path, m.shapes.b, m.channel_means, m.meas_noise, 58);
  const ModeChart chart = ModeChart::for_model(m);
  const double base = channel_evidence(chart.channel_model(chart.pack(m), false), recs);

  // Complex rotation gauge: B₂ → B₂ R(φ) c, z₂ → R(−φ) z₂ / c commutes with the block.
  const double phi = 0.7, c = 1.8;
  Matrix g = Matrix::Identity(3, 3);
  g(0, 0) = 2.5;
  g.block(1, 1, 2, 2) << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
  g.block(1, 1, 2, 2) *= c;
  ChannelModel cm = chart.channel_model(chart.pack(m), false);
  cm.observation = cm.observation * g;
  const Matrix ginv = g.inverse();
  cm.forcing = ginv * cm.forcing * ginv.transpose();
  EXPECT_NEAR(channel_evidence(cm, recs), base, 1e-9 * std::abs(base));
}

TEST(ModeChart, EvidenceInvariantUnderModePermutation) {
  std::mt19937_64 rng(59);
  const ModeModel m = testing::random_mode_model(rng, 2, 1, 3);
  const ModeRealization r = mode_realize(m);
  const SamplePath path = sample_path(r.system, regular_times(60, 0.2), InitialCondition::stationary(), 60);
  const auto recs = observe_channels(path, m.shapes.b, m.channel_means, m.meas_noise, 61);
  const ModeModel c = canonicalize(m);
  const auto ev = [&](const ModeModel& x) {
    const ModeChart chart = ModeChart::for_model(x);
    return channel_evidence(chart.channel_model(chart.pack(x), false), recs);
  };
  EXPECT_NEAR(ev(m), ev(c), 1e-9 * std::abs(ev(m)));
}

}  // namespace
}  // namespace modesleuth
