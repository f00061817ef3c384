#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "modesleuth/errors.hpp"
#include "modesleuth/lsp_model.hpp"
#include "modesleuth/model_io.hpp"
#include "test_support.hpp"

namespace modesleuth {
namespace {

using testing::random_mode_model;
using testing::random_psd;
using testing::random_stable;

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix rotation(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

template <class F>
Errc error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::parse_error;
}

TEST(LtiSystem, ValidatesInputs) {
  EXPECT_EQ(error_code([] { LtiSystem(Matrix::Zero(1, 1), scalar(1)); }), Errc::unstable_system);
  EXPECT_EQ(error_code([] { LtiSystem(scalar(-1), scalar(-1)); }), Errc::not_psd);
  Matrix k(2, 2);
  k << 1, 0.5, 0, 1;
  EXPECT_EQ(error_code([&] { LtiSystem(-Matrix::Identity(2, 2), k); }), Errc::not_psd);
}

TEST(StationaryCovariance, OuReduction) {
  EXPECT_NEAR(stationary_covariance(LtiSystem(scalar(-1), scalar(2)))(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(stationary_covariance(LtiSystem(scalar(-3), scalar(5)))(0, 0), 5.0 / 6.0, 1e-15);
}

TEST(StationaryCovariance, NegativeIdentity) {
  const Matrix s = stationary_covariance(LtiSystem(-Matrix::Identity(2, 2), Matrix::Identity(2, 2)));
  EXPECT_LT((s - 0.5 * Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(StationaryCovariance, MatchesLongVanLoanIntegral) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_stable(rng, 4, 0.3);
    const Matrix k = random_psd(rng, 4);
    const Matrix s = stationary_covariance(LtiSystem(a, k));
    const Matrix g = van_loan_discretize(a, k, 50.0 / is_stable(a).margin).noise;
    EXPECT_LT((s - g).norm() / std::max(1.0, s.norm()), 1e-8);
  }
}

TEST(LaggedCovariance, OuClosedForm) {
  const LtiSystem ou(scalar(-1), scalar(2));
  EXPECT_NEAR(lagged_covariance(ou, 2.0)(0, 0), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(lagged_covariance(ou, 2.0)(0, 0), 0.13534, 1e-5);
  EXPECT_NEAR(lagged_covariance(ou, -2.0)(0, 0), std::exp(-2.0), 1e-15);
  EXPECT_EQ(lagged_covariance(ou, 0.0), stationary_covariance(ou));
}

TEST(LaggedCovariance, DampedRotation) {
  const double alpha = 0.4, omega = 2.0, q = 3.0, tau = 0.7;
  Matrix a(2, 2);
  a << -alpha, -omega, omega, -alpha;
  const Matrix c = lagged_covariance(LtiSystem(a, q * Matrix::Identity(2, 2)), tau);
  const Matrix want = q / (2 * alpha) * std::exp(-alpha * tau) * rotation(-omega * tau);
  EXPECT_LT((c - want).norm(), 1e-13);
}

TEST(LaggedCovariance, TransposeSymmetryInLag) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const LtiSystem sys(random_stable(rng, 1 + trial % 5), random_psd(rng, 1 + trial % 5));
    for (double tau : {0.1, 1.0, 3.7}) {
      EXPECT_EQ(lagged_covariance(sys, tau).transpose(), lagged_covariance(sys, -tau)) << tau;
    }
  }
}

TEST(MeanResponse, Examples) {
  EXPECT_EQ(mean_response(LtiSystem(scalar(-1), scalar(1))), Vector::Zero(1));
  EXPECT_NEAR(mean_response(LtiSystem(scalar(-2), scalar(1), Vector::Constant(1, 4.0)))(0), 2.0, 1e-15);
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << -1, -4;
  Vector m(2);
  m << 3, 8;
  const Vector r = mean_response(LtiSystem(a, Matrix::Identity(2, 2), m));
  EXPECT_NEAR(r(0), 3.0, 1e-15);
  EXPECT_NEAR(r(1), 2.0, 1e-15);
}

TEST(ModeBlockDiagonal, Examples) {
  ModeSpec s;
  s.real_rates = {2.0};
  EXPECT_EQ(mode_block_diagonal(s), scalar(-2));

  ModeSpec c;
  c.complex_modes = {{0.1, 3.0}};
  Matrix want(2, 2);
  want << -0.1, -3, 3, -0.1;
  EXPECT_EQ(mode_block_diagonal(c), want);

  ModeSpec mixed;
  mixed.real_rates = {1.0, 2.0};
  mixed.complex_modes = {{0.5, 6.0}};
  Matrix d = Matrix::Zero(4, 4);
  d(0, 0) = -1;
  d(1, 1) = -2;
  d.block(2, 2, 2, 2) << -0.5, -6, 6, -0.5;
  EXPECT_EQ(mode_block_diagonal(mixed), d);
  EXPECT_TRUE(is_stable(mode_block_diagonal(mixed)).stable);
  EXPECT_EQ(mixed.column_of(2), 2);
}

ModeModel single_real(double lambda, double q) {
  ModeModel m;
  m.spec.real_rates = {lambda};
  m.shapes.b = scalar(1);
  m.shapes.pins = {0};
  m.noise_factor = scalar(std::sqrt(q));
  m.channel_means = Vector::Zero(1);
  m.meas_noise = Vector::Zero(1);
  return m;
}

TEST(ModeModel, SingleRealModeIsOu) {
  const ModeModel m = single_real(1.5, 2.0);
  const ModeRealization r = mode_realize(m);
  EXPECT_EQ(r.system.drift(), scalar(-1.5));
  EXPECT_NEAR(r.system.forcing()(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(mode_covariance(m, 1.0)(0, 0), 2.0 / 3.0 * std::exp(-1.5), 1e-14);
}

TEST(ModeModel, SingleComplexModeScalarKernel) {
  const double alpha = 0.3, omega = 2.0, q = 0.8;
  ModeModel m;
  m.spec.complex_modes = {{alpha, omega}};
  m.shapes.b = Matrix(1, 2);
  m.shapes.b << 1, 0;
  m.shapes.pins = {0};
  m.noise_factor = std::sqrt(q) * Matrix::Identity(2, 2);
  m.channel_means = Vector::Zero(1);
  m.meas_noise = Vector::Zero(1);
  for (double tau : {0.0, 0.5, 2.0, -1.0}) {
    const double want = q / (2 * alpha) * std::exp(-alpha * std::abs(tau)) * std::cos(omega * tau);
    EXPECT_NEAR(mode_covariance(m, tau)(0, 0), want, 1e-13) << tau;
  }
}

TEST(ModeModel, RealizationAgreesWithModeCovariance) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const ModeModel m = random_mode_model(rng, trial % 3, 1 + trial % 2, 3);
    const ModeRealization r = mode_realize(m);
    for (double tau : {0.0, 0.3, 2.0}) {
      const Matrix via = r.observation * lagged_covariance(r.system, tau) * r.observation.transpose();
      const Matrix direct = mode_covariance(m, tau);
      EXPECT_LT((via - direct).norm(), 1e-10 * std::max(1.0, direct.norm()));
    }
  }
}

TEST(ModeModel, ZeroLagCovarianceIsPsd) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const ModeModel m = random_mode_model(rng, trial % 4, trial % 3, 1 + trial % 5);
    if (m.spec.dimension() == 0) continue;
    const Matrix c = mode_covariance(m, 0.0);
    EXPECT_GE(min_eigenvalue(c), -1e-10 * c.trace());
    EXPECT_EQ(c, c.transpose());
  }
}

TEST(ModeModel, ValidateCatchesBrokenPins) {
  std::mt19937_64 rng(15);
  ModeModel m = random_mode_model(rng, 1, 1, 3);
  EXPECT_NO_THROW(validate(m));
  ModeModel bad = m;
  bad.shapes.b(bad.shapes.pins[0], 0) = 0.5;
  EXPECT_EQ(error_code([&] { validate(bad); }), Errc::invalid_model);
  EXPECT_NO_THROW(validate(bad, false));
  bad = m;
  bad.spec.complex_modes[0].alpha = -0.1;
  EXPECT_EQ(error_code([&] { validate(bad); }), Errc::invalid_model);
  bad = m;
  bad.spec.complex_modes[0].omega = 0.0;
  EXPECT_EQ(error_code([&] { validate(bad); }), Errc::invalid_model);
}

TEST(ModeModel, CanonicalizePreservesCovariance) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const ModeModel m = random_mode_model(rng, 3, 2, 4);
    const ModeModel c = canonicalize(m);
    EXPECT_TRUE(std::is_sorted(c.spec.real_rates.begin(), c.spec.real_rates.end()));
    for (std::size_t i = 1; i < c.spec.complex_modes.size(); ++i)
      EXPECT_LE(c.spec.complex_modes[i - 1].alpha, c.spec.complex_modes[i].alpha);
    for (double tau : {0.0, 0.7}) {
      EXPECT_LT((mode_covariance(m, tau) - mode_covariance(c, tau)).norm(), 1e-10);
    }
    EXPECT_TRUE(c.noise_factor.isLowerTriangular());
  }
}

TEST(ModeModel, LogCovarianceRoundTrip) {
  std::mt19937_64 rng(17);
  const Matrix s = random_psd(rng, 4) + 0.1 * Matrix::Identity(4, 4);
  EXPECT_LT((covariance_from_log(log_from_covariance(s)) - s).norm(), 1e-10 * s.norm());
}

TEST(ParameterDimension, Examples) {
  EXPECT_EQ(parameter_dimension(0, 0, 1).total, 1);
  EXPECT_EQ(parameter_dimension(1, 0, 1).total, 3);
  const auto d = parameter_dimension(2, 1, 10);
  EXPECT_EQ(d.total, 96);
  EXPECT_EQ(d.rates, 4);
  EXPECT_EQ(d.shapes, 2 * 18 + 36);
  EXPECT_EQ(d.covariance, 10);
  EXPECT_EQ(d.mean_phases, 9);
}

TEST(ParameterDimension, ClosedFormsAgree) {
  for (int nr = 0; nr <= 4; ++nr)
    for (int nc = 0; nc <= 4; ++nc)
      for (int k = 1; k <= 12; ++k) {
        const int n = nr + 2 * nc;
        const int total = parameter_dimension(nr, nc, k).total;
        EXPECT_EQ(total, dimension_closed_form(n, k));
        EXPECT_EQ(total + k - 1, dimension_general(n, 2 * k - 1));
      }
}

TEST(ModelIo, JsonRoundTrip) {
  std::mt19937_64 rng(18);
  const ModeModel m = random_mode_model(rng, 2, 1, 3);
  const auto doc = to_json(m, {"a", "b", "c"});
  EXPECT_EQ(doc.at("format"), kModeModelFormat);
  const ModeModel back = mode_model_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.spec.real_rates, m.spec.real_rates);
  EXPECT_EQ(back.shapes.b, m.shapes.b);
  EXPECT_EQ(back.shapes.pins, m.shapes.pins);
  EXPECT_EQ(back.noise_factor, m.noise_factor);
  EXPECT_EQ(back.channel_means, m.channel_means);
  EXPECT_EQ(back.meas_noise, m.meas_noise);
  EXPECT_EQ(channel_names_from_json(doc), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(ModelIo, RejectsWrongFormat) {
  std::mt19937_64 rng(19);
  auto doc = to_json(random_mode_model(rng, 1, 0, 1));
  doc["format"] = "mode-model/9";
  EXPECT_EQ(error_code([&] { mode_model_from_json(doc); }), Errc::parse_error);
}

}  // namespace
}  // namespace modesleuth
