#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "modesleuth/errors.hpp"
#include "modesleuth/kalman.hpp"
#include "modesleuth/simulator.hpp"
#include "test_support.hpp"

namespace modesleuth {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

ObservationRecord scalar_record(double t, double y, double h = 0.0) {
  ObservationRecord r;
  r.time = t;
  r.selector = scalar(1);
  r.offset = Vector::Zero(1);
  r.noise = scalar(h);
  r.value = Vector::Constant(1, y);
  return r;
}

/// Random irregular scheme with partial channel selections, simulated from sys.
std::vector<ObservationRecord> random_records(std::mt19937_64& rng, const LtiSystem& sys, int count) {
  const Eigen::Index n = sys.dimension();
  std::exponential_distribution<double> gap(2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> times;
  double t = 0.0;
  for (int i = 0; i < count; ++i) {
    t += 0.01 + gap(rng);
    times.push_back(t);
  }
  const SamplePath path = sample_path(sys, times, InitialCondition::stationary(), rng());
  ObservationScheme scheme;
  for (double ti : times) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(u(rng) * static_cast<double>(n + 1)) % (n + 1);
    ObservationSlot s;
    s.time = ti;
    s.selector = testing::random_matrix(rng, d, n);
    s.offset = testing::random_matrix(rng, d, 1);
    s.noise = testing::random_psd(rng, d) * 0.1 + 0.01 * Matrix::Identity(d, d);
    scheme.push_back(s);
  }
  return observe_path(path, scheme, rng());
}

TEST(InitStationary, Examples) {
  FilterState s = init_stationary(LtiSystem(scalar(-1), scalar(2)));
  EXPECT_EQ(s.x(0), 0.0);
  EXPECT_NEAR(s.p(0, 0), 1.0, 1e-15);
  EXPECT_EQ(s.evidence, 0.0);
  EXPECT_FALSE(s.t_last.has_value());

  s = init_stationary(LtiSystem(-Matrix::Identity(2, 2), Matrix::Zero(2, 2)));
  EXPECT_EQ(s.p, Matrix::Zero(2, 2));

  Matrix a(2, 2);
  a << -0.5, -2, 2, -0.5;
  s = init_stationary(LtiSystem(a, 3.0 * Matrix::Identity(2, 2)));
  EXPECT_LT((s.p - 3.0 * Matrix::Identity(2, 2)).norm(), 1e-13);
}

TEST(Predict, Examples) {
  const LtiSystem ou(scalar(-1), scalar(2));
  FilterState s = init_stationary(ou);
  s.x(0) = 0.7;
  s.p(0, 0) = 0.0;
  Prediction p = predict(s, ou, 1.0);
  EXPECT_NEAR(p.p(0, 0), 1.0 - std::exp(-2.0), 1e-15);
  EXPECT_NEAR(p.x(0), 0.7 * std::exp(-1.0), 1e-15);

  s.p(0, 0) = 0.4;
  p = predict(s, ou, 1e-9);
  EXPECT_NEAR(p.x(0), 0.7, 1e-6 * 0.7);
  EXPECT_NEAR(p.p(0, 0), 0.4, 1e-6 * 0.4);

  std::mt19937_64 rng(31);
  const Matrix a = testing::random_stable(rng, 3);
  const LtiSystem quiet(a, Matrix::Zero(3, 3));
  FilterState q = init_stationary(quiet);
  q.p = testing::random_psd(rng, 3);
  const Matrix phi = van_loan_discretize(a, Matrix::Zero(3, 3), 0.8).transition;
  EXPECT_LT((predict(q, quiet, 0.8).p - phi * q.p * phi.transpose()).norm(), 1e-15 * q.p.norm());

  try {
    predict(s, ou, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_times);
  }
}

TEST(Update, ScalarHandWorked) {
  const Prediction pred{Vector::Zero(1), scalar(1)};
  const ObservationSlot slot{0.0, scalar(1), Vector::Zero(1), scalar(1)};
  const UpdateResult r = update(pred, slot, Vector::Constant(1, 1.0));
  EXPECT_NEAR(r.report.gain(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r.x(0), 0.5, 1e-15);
  EXPECT_NEAR(r.p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r.report.evidence_gain, -0.5 * (0.5 + std::log(2.0) + kLog2Pi), 1e-14);
}

TEST(Update, UninformativeObservation) {
  const Prediction pred{Vector::Constant(2, 0.3), Matrix::Identity(2, 2)};
  const ObservationSlot slot{0.0, Matrix::Identity(2, 2), Vector::Zero(2), 1e12 * Matrix::Identity(2, 2)};
  const UpdateResult r = update(pred, slot, Vector::Constant(2, 1.0));
  EXPECT_LT((r.x - pred.x).norm(), 1e-9);
  EXPECT_LT((r.p - pred.p).norm(), 1e-9);
  const double want = -0.5 * (2 * std::log(1e12) + 2 * kLog2Pi);
  EXPECT_NEAR(r.report.evidence_gain, want, 1e-6 * std::abs(want));
}

TEST(Update, ExactObservation) {
  const Prediction pred{Vector::Zero(2), Matrix::Identity(2, 2)};
  Vector m(2), y(2);
  m << 0.5, -1;
  y << 2, 3;
  const ObservationSlot slot{0.0, Matrix::Identity(2, 2), m, Matrix::Zero(2, 2)};
  const UpdateResult r = update(pred, slot, y);
  EXPECT_LT((r.x - (y - m)).norm(), 1e-14);
  EXPECT_LT(r.p.norm(), 1e-14);
}

TEST(Update, SingularInnovationAfterJitter) {
  const Prediction pred{Vector::Zero(1), scalar(0)};
  const ObservationSlot slot{0.0, scalar(1), Vector::Zero(1), scalar(0)};
  try {
    update(pred, slot, Vector::Constant(1, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::singular_innovation);
  }
}

TEST(Step, DiscountedEvidence) {
  const LtiSystem ou(scalar(-1), scalar(2));
  const std::vector<ObservationRecord> recs{scalar_record(0, 0.3, 0.1), scalar_record(1, -0.5, 0.1),
                                            scalar_record(2, 1.2, 0.1)};
  for (double lambda : {0.0, 0.5, 1e6}) {
    FilterState s = init_stationary(ou);
    std::vector<double> eps;
    for (const auto& r : recs) {
      const StepResult st = step(s, ou, r, lambda);
      s = st.state;
      eps.push_back(st.report.evidence_gain);
    }
    double direct = 0.0;
    for (std::size_t j = 0; j < eps.size(); ++j) direct += std::exp(-lambda * (recs.back().time - recs[j].time)) * eps[j];
    EXPECT_NEAR(s.discounted, direct, 1e-12) << lambda;
    if (lambda == 0.0) EXPECT_EQ(s.discounted, s.evidence);
    if (lambda == 1e6) EXPECT_EQ(s.discounted, eps.back());
  }
}

TEST(Step, OutOfOrderRejected) {
  const LtiSystem ou(scalar(-1), scalar(2));
  const FilterState s = step(init_stationary(ou), ou, scalar_record(1.0, 0.0, 0.1)).state;
  try {
    step(s, ou, scalar_record(0.5, 0.0, 0.1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_times);
  }
}

TEST(BatchEvidence, Examples) {
  const LtiSystem ou(scalar(-1), scalar(2));
  EXPECT_EQ(batch_evidence(ou, {}), 0.0);
  const std::vector<ObservationRecord> recs{scalar_record(0, 0.4), scalar_record(1, -0.2)};
  Matrix c(2, 2);
  c << 1, std::exp(-1.0), std::exp(-1.0), 1;
  Vector y(2);
  y << 0.4, -0.2;
  const double want = gaussian_logpdf(y, c);
  EXPECT_NEAR(batch_evidence(ou, recs), want, 1e-10);
  EXPECT_NEAR(dense_gp_loglik(ou, recs), want, 1e-10);
}

TEST(DenseGp, ScalarObservation) {
  const double c = 2.5, m = 0.3, y = 1.1;
  ObservationRecord r = scalar_record(0.0, y);
  r.offset(0) = m;
  const LtiSystem sys(scalar(-1), scalar(2 * c));
  EXPECT_NEAR(dense_gp_loglik(sys, std::vector{r}), -0.5 * ((y - m) * (y - m) / c + std::log(c) + kLog2Pi), 1e-13);
}

TEST(DenseGp, DecorrelatedLimit) {
  const LtiSystem fast(scalar(-50), scalar(100));
  std::vector<ObservationRecord> recs;
  double independent = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double y = 0.1 * i - 0.2;
    recs.push_back(scalar_record(10.0 * i, y, 0.5));
    independent += -0.5 * (y * y / 1.5 + std::log(1.5) + kLog2Pi);
  }
  EXPECT_NEAR(dense_gp_loglik(fast, recs), independent, 1e-6);
}

TEST(DenseGp, NotPsdWithoutMeasurementNoise) {
  const LtiSystem deg(-Matrix::Identity(2, 2), Matrix::Zero(2, 2));
  ObservationRecord r = scalar_record(0.0, 0.0);
  r.selector = Matrix::Ones(1, 2);
  try {
    dense_gp_loglik(deg, std::vector{r});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_psd);
  }
}

TEST(OracleEquivalence, RandomSystemsAndSchemes) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    Vector mean_forcing;
    if (trial % 2) mean_forcing = testing::random_matrix(rng, n, 1);
    const LtiSystem sys(testing::random_stable(rng, n, 0.1), testing::random_psd(rng, n), mean_forcing);
    const int count = 10 + (trial * 37) % 191;
    const auto recs = random_records(rng, sys, count);
    const double kal = batch_evidence(sys, recs);
    const double dense = dense_gp_loglik(sys, recs);
    EXPECT_LT(std::abs(kal - dense), 1e-8 * std::max(1.0, std::abs(kal))) << "trial " << trial << " n=" << n;
  }
}

TEST(OracleEquivalence, TwoHundredRecordsFiveStates) {
  std::mt19937_64 rng(33);
  const LtiSystem sys(testing::random_stable(rng, 5, 0.1), testing::random_psd(rng, 5));
  const auto recs = random_records(rng, sys, 200);
  const double kal = batch_evidence(sys, recs);
  EXPECT_LT(std::abs(kal - dense_gp_loglik(sys, recs)), 1e-8 * std::abs(kal));
}

TEST(Step, StackingOrderDoesNotChangeEvidence) {
  std::mt19937_64 rng(34);
  const LtiSystem sys(testing::random_stable(rng, 3), testing::random_psd(rng, 3));
  auto recs = random_records(rng, sys, 30);
  const double before = batch_evidence(sys, recs);
  for (auto& r : recs) {
    const Eigen::Index d = r.value.size();
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(d);
    perm.setIdentity();
    perm.indices().reverseInPlace();
    r.selector = perm * r.selector;
    r.offset = perm * r.offset;
    r.value = perm * r.value;
    r.noise = perm * r.noise * perm.transpose();
  }
  EXPECT_NEAR(batch_evidence(sys, recs), before, 1e-10 * std::abs(before));
}

TEST(Step, CovarianceStaysPsdOnLongStream) {
  std::mt19937_64 rng(35);
  const Matrix a = testing::random_stable(rng, 4, 0.05);
  const LtiSystem sys(a, testing::random_psd(rng, 4, 2));
  std::vector<double> times = regular_times(100000, 0.05);
  const SamplePath path = sample_path(sys, times, InitialCondition::stationary(), 36);
  Matrix z = Matrix::Zero(1, 4);
  z(0, 0) = 1.0;
  FilterState s = init_stationary(sys);
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    ObservationRecord r;
    r.time = times[i];
    r.selector = z;
    r.offset = Vector::Zero(1);
    r.noise = scalar(i % 3 == 0 ? 0.0 : 1e-4);
    r.value = z * path.states.col(static_cast<Eigen::Index>(i));
    s = step(s, sys, r).state;
    if (i % 1000 == 999) {
      EXPECT_EQ(s.p, s.p.transpose());
      worst = std::min(worst, min_eigenvalue(s.p) / s.p.trace());
    }
  }
  EXPECT_GE(worst, -1e-9);
}

TEST(Step, ConstantCostPerRecord) {
  std::mt19937_64 rng(37);
  const LtiSystem sys(testing::random_stable(rng, 6), testing::random_psd(rng, 6));
  const auto recs = random_records(rng, sys, 200);
  // Warm-up pass, then time the first and last 50 records over several repeats.
  double early = 0.0, late = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    FilterState s = init_stationary(sys);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      s = step(s, sys, recs[i]).state;
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (rep == 0) continue;
      if (i < 50) early += dt;
      if (i >= 150) late += dt;
    }
  }
  EXPECT_LE(late / early, 1.2);
}

}  // namespace
}  // namespace modesleuth
