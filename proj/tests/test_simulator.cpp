#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "modesleuth/errors.hpp"
#include "modesleuth/simulator.hpp"
#include "test_support.hpp"

namespace modesleuth {
namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

TEST(SamplePath, NoiselessDecayIsExact) {
  const LtiSystem sys(scalar(-1), scalar(0));
  const std::vector<double> times{0.0, 1.0};
  const SamplePath p = sample_path(sys, times, InitialCondition::at(Vector::Constant(1, 2.0)), 3);
  EXPECT_EQ(p.states(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.states(0, 1), 2.0 * std::exp(-1.0));
}

TEST(SamplePath, NoiselessMatchesExpmOnIrregularTimes) {
  std::mt19937_64 rng(21);
  const Matrix a = testing::random_stable(rng, 3);
  const LtiSystem sys(a, Matrix::Zero(3, 3));
  const std::vector<double> times{0.0, 0.3, 1.1, 1.15, 4.0};
  const Vector x0 = Vector::Ones(3);
  const SamplePath p = sample_path(sys, times, InitialCondition::at(x0), 1);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Vector want = expm(a, times[i]) * x0;
    EXPECT_LT((p.states.col(static_cast<Eigen::Index>(i)) - want).norm(), 1e-13);
  }
}

TEST(SamplePath, RejectsNonIncreasingTimes) {
  const LtiSystem sys(scalar(-1), scalar(1));
  const std::vector<double> times{0.0, 1.0, 1.0};
  try {
    sample_path(sys, times, InitialCondition::stationary(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_times);
  }
}

TEST(SamplePath, DeterministicGivenSeed) {
  const LtiSystem sys(-Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const auto times = regular_times(100, 0.1);
  const SamplePath a = sample_path(sys, times, InitialCondition::stationary(), 42);
  const SamplePath b = sample_path(sys, times, InitialCondition::stationary(), 42);
  const SamplePath c = sample_path(sys, times, InitialCondition::stationary(), 43);
  EXPECT_EQ(a.states, b.states);
  EXPECT_NE(a.states, c.states);
}

TEST(SamplePath, OuStationaryMoments) {
  // OU(μ = 1, σ = √2): variance 1, lag-1 autocovariance e⁻¹.
  const LtiSystem sys(scalar(-1), scalar(2));
  const auto times = regular_times(20000, 0.1);
  double var_sum = 0.0, lag_sum = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 100 + s);
    const Eigen::RowVectorXd x = p.states.row(0);
    const double mean = x.mean();
    const Eigen::ArrayXd c = (x.array() - mean).transpose();
    var_sum += c.square().mean();
    const Eigen::Index lag = 10, n = c.size() - lag;
    lag_sum += (c.head(n) * c.tail(n)).mean();
  }
  EXPECT_NEAR(var_sum / seeds, 1.0, 0.1);
  EXPECT_NEAR(lag_sum / seeds, std::exp(-1.0), 0.05);
}

TEST(SamplePath, TwoStepCovarianceComposition) {
  // Var x(τ₁+τ₂) from a fixed start equals the composed noise integral.
  std::mt19937_64 rng(22);
  const Matrix a = testing::random_stable(rng, 2, 0.5);
  const Matrix k = testing::random_psd(rng, 2);
  const LtiSystem sys(a, k);
  const std::vector<double> times{0.0, 0.4, 1.0};
  const int reps = 20000;
  Matrix acc = Matrix::Zero(2, 2);
  for (int r = 0; r < reps; ++r) {
    const SamplePath p = sample_path(sys, times, InitialCondition::at(Vector::Zero(2)), derive_seed(7, r));
    acc += p.states.col(2) * p.states.col(2).transpose();
  }
  acc /= reps;
  const Matrix want = van_loan_discretize(a, k, 1.0).noise;
  EXPECT_LT((acc - want).norm(), 0.05 * want.norm());
}

TEST(ObservePath, NoiselessIdentityReproducesStates) {
  const LtiSystem sys(-Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const auto times = regular_times(5, 0.5);
  const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 5);
  ObservationScheme scheme;
  for (double t : times) scheme.push_back({t, Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Zero(2, 2)});
  const auto rec = observe_path(p, scheme, 6);
  ASSERT_EQ(rec.size(), times.size());
  for (std::size_t i = 0; i < rec.size(); ++i) EXPECT_EQ(rec[i].value, p.states.col(static_cast<Eigen::Index>(i)));
}

TEST(ObservePath, SelectorPicksOneChannel) {
  const LtiSystem sys(-Matrix::Identity(3, 3), Matrix::Identity(3, 3));
  const auto times = regular_times(3, 1.0);
  const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 8);
  Matrix z = Matrix::Zero(1, 3);
  z(0, 1) = 1.0;
  const ObservationScheme scheme{{1.0, z, Vector::Zero(1), Matrix::Zero(1, 1)}};
  const auto rec = observe_path(p, scheme, 9);
  ASSERT_EQ(rec.size(), 1u);
  EXPECT_EQ(rec[0].value.size(), 1);
  EXPECT_EQ(rec[0].value(0), p.states(1, 1));
}

TEST(ObservePath, MeasurementNoiseVariance) {
  const LtiSystem sys(scalar(-1), scalar(2));
  const auto times = regular_times(10000, 0.1);
  const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 10);
  ObservationScheme scheme;
  for (double t : times) scheme.push_back({t, scalar(1), Vector::Zero(1), scalar(0.01)});
  const auto rec = observe_path(p, scheme, 11);
  double ss = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double r = rec[i].value(0) - p.states(0, static_cast<Eigen::Index>(i));
    ss += r * r;
  }
  EXPECT_NEAR(ss / static_cast<double>(rec.size()), 0.01, 0.001);
}

TEST(ObservePath, Errors) {
  const LtiSystem sys(scalar(-1), scalar(1));
  const auto times = regular_times(3, 1.0);
  const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 1);
  const ObservationScheme off_path{{0.5, scalar(1), Vector::Zero(1), scalar(0)}};
  try {
    observe_path(p, off_path, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_times);
  }
  const ObservationScheme bad_dims{{1.0, Matrix::Ones(1, 2), Vector::Zero(1), scalar(0)}};
  try {
    observe_path(p, bad_dims, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_scheme);
  }
}

TEST(ObserveChannels, DropsButKeepsAtLeastOne) {
  const LtiSystem sys(-Matrix::Identity(3, 3), Matrix::Identity(3, 3));
  const auto times = regular_times(500, 0.1);
  const SamplePath p = sample_path(sys, times, InitialCondition::stationary(), 12);
  const auto rec = observe_channels(p, Matrix::Identity(3, 3), Vector::Zero(3), Vector::Zero(3), 13, 0.3);
  std::size_t total = 0;
  for (const auto& r : rec) {
    EXPECT_GE(r.channels.size(), 1u);
    EXPECT_TRUE(std::is_sorted(r.channels.begin(), r.channels.end()));
    total += r.channels.size();
  }
  EXPECT_LT(total, 3u * rec.size());
}

}  // namespace
}  // namespace modesleuth
