#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "modesleuth/errors.hpp"
#include "modesleuth/kernels.hpp"

namespace modesleuth {
namespace {

double realization_kernel(const KernelParams& p, double tau) {
  const KernelRealization r = kernel_realization(p);
  return lagged_covariance(r.system, tau)(r.observed, r.observed);
}

TEST(Kernels, OuAtZeroLag) { EXPECT_NEAR(kernel_eval(OuKernel{1.0, std::sqrt(2.0)}, 0.0), 1.0, 1e-15); }

TEST(Kernels, OuMatchesRealization) {
  const OuKernel ou{0.7, 1.3};
  for (double tau : {0.0, 0.1, 1.0, 10.0}) {
    EXPECT_NEAR(kernel_eval(ou, tau), realization_kernel(ou, tau), 1e-12) << tau;
    EXPECT_EQ(kernel_eval(ou, tau), kernel_eval(ou, -tau));
  }
}

TEST(Kernels, LangevinCriticalExample) {
  const LangevinKernel p{1.0, 2.0, 1.0, 2.0};
  EXPECT_EQ(regime_of(p), LangevinRegime::critical);
  EXPECT_NEAR(kernel_eval(p, 1.0), 2.0 * std::exp(-1.0), 1e-14);
  EXPECT_NEAR(kernel_eval(p, 1.0), 0.73576, 1e-5);
}

TEST(Kernels, LangevinAllRegimesMatchRealization) {
  const LangevinKernel under{1.5, 0.4, 2.0, 0.9};
  const LangevinKernel critical{1.0, 2.0, 1.0, 1.1};
  const LangevinKernel over{0.5, 3.0, 1.0, 0.7};
  EXPECT_EQ(regime_of(under), LangevinRegime::underdamped);
  EXPECT_EQ(regime_of(over), LangevinRegime::overdamped);
  for (const auto& p : {under, critical, over}) {
    for (double tau : {0.0, 0.2, 1.0, 4.0, -2.5}) {
      EXPECT_NEAR(kernel_eval(p, tau), realization_kernel(p, tau), 1e-9) << tau;
    }
  }
}

TEST(Kernels, LangevinRegimeBoundaryIsContinuous) {
  // mk = 1; β²/4 = mk at β = 2.
  const LangevinKernel critical{1.0, 2.0, 1.0, 1.0};
  const LangevinKernel under{1.0, 2.0 - 1e-6, 1.0, 1.0};
  const LangevinKernel over{1.0, 2.0 + 1e-6, 1.0, 1.0};
  EXPECT_EQ(regime_of(under), LangevinRegime::underdamped);
  EXPECT_EQ(regime_of(over), LangevinRegime::overdamped);
  for (double tau : {0.0, 0.5, 2.0}) {
    EXPECT_NEAR(kernel_eval(under, tau), kernel_eval(critical, tau), 1e-4);
    EXPECT_NEAR(kernel_eval(over, tau), kernel_eval(critical, tau), 1e-4);
  }
}

TEST(Kernels, FouGammaOverEParametersAtZeroLag) {
  const double gamma = std::exp(-1.0), j = std::exp(2.0);
  const FouKernel p{1.0, gamma, j, 1.0};
  EXPECT_NEAR(kernel_eval(p, 0.0), 1.0 / (2 * j * gamma * (gamma + j)), 1e-14);
  for (double tau : {0.0, 0.05, 1.0, 8.0}) {
    EXPECT_NEAR(kernel_eval(p, tau), realization_kernel(p, tau), 1e-9 * kernel_eval(p, 0.0)) << tau;
  }
}

TEST(Kernels, FouEqualsOverdampedLangevinForm) {
  // With M = 1 the f-process is m f'' + (Γ + J) f' + ΓJ f = σ ξ.
  for (auto [g, j] : {std::pair{0.5, 3.0}, std::pair{4.0, 0.2}}) {
    const FouKernel fou{1.0, g, j, 1.3};
    const LangevinKernel lang{1.0, g + j, g * j, 1.3};
    ASSERT_EQ(regime_of(lang), LangevinRegime::overdamped);
    for (double tau : {0.0, 0.3, 2.0}) {
      EXPECT_NEAR(kernel_eval(fou, tau), kernel_eval(lang, tau), 1e-9) << tau;
    }
  }
}

TEST(Kernels, FouDegenerateRatesRejected) {
  try {
    kernel_eval(FouKernel{2.0, 2.0, 1.0, 1.0}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_rates);
  }
}

TEST(Kernels, NonPositiveParametersRejected) {
  try {
    kernel_eval(OuKernel{-1.0, 1.0}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_input);
  }
}

}  // namespace
}  // namespace modesleuth
