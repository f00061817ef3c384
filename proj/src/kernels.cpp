#include "modesleuth/kernels.hpp"

#include <cmath>

#include "modesleuth/errors.hpp"

namespace modesleuth {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::invalid_input, std::string(name) + " must be positive");
}

double ou(const OuKernel& p, double tau) {
  require_positive(p.mu, "mu");
  require_positive(p.sigma, "sigma");
  return p.sigma * p.sigma / (2.0 * p.mu) * std::exp(-p.mu * tau);
}

double langevin(const LangevinKernel& p, double tau) {
  require_positive(p.mass, "mass");
  require_positive(p.damping, "damping");
  require_positive(p.stiffness, "stiffness");
  require_positive(p.sigma, "sigma");
  const double m = p.mass;
  const double beta = p.damping;
  const double k = p.stiffness;
  const double s2 = p.sigma * p.sigma;
  const double alpha = beta / (2.0 * m);
  switch (regime_of(p)) {
    case LangevinRegime::underdamped: {
      const double omega = std::sqrt(m * k - beta * beta / 4.0) / m;
      return s2 / (2.0 * beta * k) * std::exp(-alpha * tau) *
             (std::cos(omega * tau) + alpha / omega * std::sin(omega * tau));
    }
    case LangevinRegime::critical:
      return s2 / (2.0 * beta * k) * std::exp(-alpha * tau) * (1.0 + alpha * tau);
    case LangevinRegime::overdamped: {
      const double eps = std::sqrt(beta * beta / 4.0 - m * k) / m;
      const double lp = alpha + eps;
      const double lm = alpha - eps;
      return s2 / (4.0 * beta * k * eps) * (lp * std::exp(-lm * tau) - lm * std::exp(-lp * tau));
    }
  }
  return 0.0;
}

double fou(const FouKernel& p, double tau) {
  require_positive(p.inertia, "inertia");
  require_positive(p.damping, "damping");
  require_positive(p.relaxation, "relaxation");
  require_positive(p.sigma, "sigma");
  const double big_gamma = p.gamma_rate();
  const double j = p.relaxation;
  if (std::abs(big_gamma - j) <= 1e-10 * std::max(big_gamma, j)) {
    throw Error(Errc::degenerate_rates, "filtered OU kernel needs distinct rates Γ != J");
  }
  const double s2 = p.sigma * p.sigma;
  return s2 / (2.0 * j * p.inertia * p.damping * (big_gamma * big_gamma - j * j)) *
         (big_gamma * std::exp(-j * tau) - j * std::exp(-big_gamma * tau));
}

}  // namespace

LangevinRegime regime_of(const LangevinKernel& p) {
  const double disc = p.damping * p.damping / 4.0 - p.mass * p.stiffness;
  if (std::abs(disc) <= 1e-14 * p.mass * p.stiffness) return LangevinRegime::critical;
  return disc < 0.0 ? LangevinRegime::underdamped : LangevinRegime::overdamped;
}

double kernel_eval(const KernelParams& p, double tau) {
  if (!std::isfinite(tau)) throw Error(Errc::invalid_input, "lag must be finite");
  const double lag = std::abs(tau);
  return std::visit(Overloaded{[&](const OuKernel& k) { return ou(k, lag); },
                               [&](const LangevinKernel& k) { return langevin(k, lag); },
                               [&](const FouKernel& k) { return fou(k, lag); }},
                    p);
}

KernelRealization kernel_realization(const KernelParams& p) {
  return std::visit(
      Overloaded{
          [](const OuKernel& k) {
            require_positive(k.mu, "mu");
            Matrix a(1, 1), q(1, 1);
            a << -k.mu;
            q << k.sigma * k.sigma;
            return KernelRealization{LtiSystem(a, q), 0};
          },
          [](const LangevinKernel& k) {
            require_positive(k.mass, "mass");
            Matrix a(2, 2), q = Matrix::Zero(2, 2);
            a << 0.0, 1.0, -k.stiffness / k.mass, -k.damping / k.mass;
            q(1, 1) = k.sigma * k.sigma / (k.mass * k.mass);
            return KernelRealization{LtiSystem(a, q), 0};
          },
          [](const FouKernel& k) {
            require_positive(k.inertia, "inertia");
            Matrix a(2, 2), q = Matrix::Zero(2, 2);
            a << -k.gamma_rate(), 1.0 / k.inertia, 0.0, -k.relaxation;
            q(1, 1) = k.sigma * k.sigma;
            return KernelRealization{LtiSystem(a, q), 0};
          }},
      p);
}

}  // namespace modesleuth
