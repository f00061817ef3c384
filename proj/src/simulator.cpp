#include "modesleuth/simulator.hpp"

#include <cmath>
#include <random>

#include "modesleuth/errors.hpp"

namespace modesleuth {
namespace {

class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(derive_seed(seed, 0)) {}

  Vector draw(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_(engine_);
    return v;
  }

  double uniform() { return uniform_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Factor of a covariance that may carry roundoff-sized negative eigenvalues.
Matrix noise_factor(const Matrix& cov) {
  if (cov.size() == 0) return cov;
  const double tol = 1e-12 * std::max(std::abs(cov.trace()), 1e-300);
  try {
    return cholesky_psd(symmetrize(cov), tol).lower;
  } catch (const Error&) {
    // Clamp eigenvalues in [-1e-12 trace, 0) to zero and retry via the spectrum.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(cov));
    if (eig.eigenvalues().minCoeff() < -tol) throw;
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> regular_times(std::size_t n, double dt, double t0) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = t0 + dt * static_cast<double>(i);
  return t;
}

SamplePath sample_path(const LtiSystem& sys, std::span<const double> times, const InitialCondition& init,
                       std::uint64_t seed) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw Error(Errc::invalid_times, "sample times must be strictly increasing");
  }
  const Eigen::Index n = sys.dimension();
  SamplePath path;
  path.times.assign(times.begin(), times.end());
  path.states.resize(n, static_cast<Eigen::Index>(times.size()));
  if (times.empty()) return path;

  GaussianSource rng(seed);
  const Vector mu = mean_response(sys);
  Vector x;
  if (init.fixed) {
    if (init.fixed->size() != n) throw Error(Errc::invalid_input, "initial state has the wrong dimension");
    x = *init.fixed;
  } else {
    x = mu + noise_factor(stationary_covariance(sys)) * rng.draw(n);
  }
  path.states.col(0) = x;

  double cached_tau = -1.0;
  Discretization disc;
  Matrix root;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double tau = times[i] - times[i - 1];
    if (tau != cached_tau) {
      disc = van_loan_discretize(sys.drift(), sys.forcing(), tau);
      root = noise_factor(disc.noise);
      cached_tau = tau;
    }
    Vector next = disc.transition * x + root * rng.draw(n);
    if (sys.has_mean_forcing()) next += mu - disc.transition * mu;
    x = std::move(next);
    path.states.col(static_cast<Eigen::Index>(i)) = x;
  }
  return path;
}

std::vector<ObservationRecord> observe_path(const SamplePath& path, const ObservationScheme& scheme,
                                            std::uint64_t seed) {
  GaussianSource rng(seed);
  std::vector<ObservationRecord> out;
  out.reserve(scheme.size());
  std::size_t cursor = 0;
  for (const auto& slot : scheme) {
    while (cursor < path.times.size() && path.times[cursor] < slot.time) ++cursor;
    if (cursor == path.times.size() || path.times[cursor] != slot.time) {
      throw Error(Errc::invalid_times, "observation time is not a path time");
    }
    const Eigen::Index d = slot.selector.rows();
    if (slot.selector.cols() != path.states.rows() || slot.offset.size() != d || slot.noise.rows() != d ||
        slot.noise.cols() != d) {
      throw Error(Errc::invalid_scheme, "observation slot dimensions are inconsistent");
    }
    ObservationRecord rec;
    static_cast<ObservationSlot&>(rec) = slot;
    rec.value = slot.selector * path.states.col(static_cast<Eigen::Index>(cursor)) + slot.offset +
                noise_factor(slot.noise) * rng.draw(d);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ChannelRecord> observe_channels(const SamplePath& path, const Matrix& observation, const Vector& offsets,
                                            const Vector& noise_var, std::uint64_t seed, double keep_probability) {
  const Eigen::Index m = observation.rows();
  if (observation.cols() != path.states.rows() || offsets.size() != m || noise_var.size() != m) {
    throw Error(Errc::invalid_scheme, "observation map dimensions are inconsistent");
  }
  if ((noise_var.array() < 0.0).any()) throw Error(Errc::invalid_scheme, "measurement variances must be >= 0");
  GaussianSource rng(seed);
  const Vector sd = noise_var.cwiseSqrt();
  std::vector<ChannelRecord> out;
  out.reserve(path.times.size());
  for (std::size_t i = 0; i < path.times.size(); ++i) {
    const Vector clean = observation * path.states.col(static_cast<Eigen::Index>(i)) + offsets;
    const Vector noise = rng.draw(m);
    ChannelRecord rec;
    rec.time = path.times[i];
    for (Eigen::Index c = 0; c < m; ++c) {
      if (keep_probability >= 1.0 || rng.uniform() < keep_probability) rec.channels.push_back(static_cast<int>(c));
    }
    if (rec.channels.empty()) rec.channels.push_back(static_cast<int>(std::floor(rng.uniform() * static_cast<double>(m))));
    rec.values.resize(static_cast<Eigen::Index>(rec.channels.size()));
    for (std::size_t k = 0; k < rec.channels.size(); ++k) {
      const int c = rec.channels[k];
      rec.values(static_cast<Eigen::Index>(k)) = clean(c) + sd(c) * noise(c);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace modesleuth
