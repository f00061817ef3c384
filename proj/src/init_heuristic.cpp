#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "modesleuth/errors.hpp"
#include "modesleuth/estimator.hpp"
#include "modesleuth/spectral.hpp"

namespace modesleuth {

namespace {

constexpr std::size_t kMinPoints = 64;
constexpr std::size_t kMaxPoints = std::size_t{1} << 20;
constexpr double kPeakFactor = 6.0;

// Linear interpolation of each channel onto an even grid.
Matrix resample(std::span<const ChannelRecord> records, Eigen::Index channels, double t0, double dt, std::size_t n,
                const Vector& fallback) {
  Matrix out(static_cast<Eigen::Index>(n), channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    std::vector<double> ts, vs;
    for (const auto& r : records) {
      for (std::size_t k = 0; k < r.channels.size(); ++k) {
        if (r.channels[k] != c) continue;
        ts.push_back(r.time);
        vs.push_back(r.values(static_cast<Eigen::Index>(k)));
      }
    }
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t0 + dt * static_cast<double>(i);
      double v = fallback(c);
      if (!ts.empty()) {
        while (j + 1 < ts.size() && ts[j + 1] <= t) ++j;
        if (t <= ts.front()) v = vs.front();
        else if (j + 1 >= ts.size()) v = vs.back();
        else v = vs[j] + (vs[j + 1] - vs[j]) * (t - ts[j]) / (ts[j + 1] - ts[j]);
      }
      out(static_cast<Eigen::Index>(i), c) = v;
    }
  }
  return out;
}

double local_median(const std::vector<double>& s, std::size_t k, std::size_t half) {
  const std::size_t lo = k > half ? k - half : 1;
  const std::size_t hi = std::min(s.size(), k + half + 1);
  std::vector<double> w(s.begin() + static_cast<std::ptrdiff_t>(lo), s.begin() + static_cast<std::ptrdiff_t>(hi));
  const auto mid = w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2);
  std::nth_element(w.begin(), mid, w.end());
  return *mid;
}

// Frequency where s first drops below `level` walking from k in direction dir.
std::optional<double> crossing(const std::vector<double>& s, const std::vector<double>& f, std::size_t k, int dir,
                               double level) {
  std::size_t i = k;
  while (true) {
    if (dir < 0 && i == 0) return std::nullopt;
    if (dir > 0 && i + 1 >= s.size()) return std::nullopt;
    const std::size_t j = dir < 0 ? i - 1 : i + 1;
    if (s[j] < level) {
      const double w = (s[i] - level) / (s[i] - s[j]);
      return f[i] + w * (f[j] - f[i]);
    }
    i = j;
  }
}

struct Peak {
  std::size_t bin;
  double height;
  double lo;  // half-maximum interval, Hz
  double hi;
};

}  // namespace

ModeModel init_heuristic(const ModeFamily& family, Eigen::Index channels, std::span<const ChannelRecord> records,
                         std::uint64_t seed, const Logger& log) {
  const DataSummary summary = summarize(records, channels);
  const std::size_t modes = family.real + family.complex;
  ModeModel m;
  m.channel_means = summary.mean;
  m.meas_noise.resize(channels);
  for (Eigen::Index c = 0; c < channels; ++c) m.meas_noise(c) = 0.01 * summary.scale(c);
  const auto sdev = [&](Eigen::Index c) { return std::sqrt(summary.scale(c)); };

  double dt = summary.median_dt;
  if (!(dt > 0.0)) throw Error(Errc::invalid_input, "records need at least two distinct times");
  std::size_t n = static_cast<std::size_t>(std::floor(summary.duration / dt)) + 1;
  if (n < kMinPoints) throw Error(Errc::invalid_input, "initialization needs at least 64 points");
  if (n > kMaxPoints) {
    dt = summary.duration / static_cast<double>(kMaxPoints - 1);
    n = kMaxPoints;
  }
  if (modes == 0) {
    m.shapes.b = Matrix::Zero(channels, 0);
    m.noise_factor = Matrix::Zero(0, 0);
    return m;
  }

  const Matrix series = resample(records, channels, records.front().time, dt, n, summary.mean);
  const int segments = n >= 5 * kMinPoints ? 4 : 1;
  const CrossSpectrum cs = welch_cross(series, dt, segments);
  const std::size_t bins = cs.frequencies.size();
  std::vector<double> trace(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double t = 0.0;
    for (Eigen::Index c = 0; c < channels; ++c) t += cs.matrices[k](c, c).real() / summary.scale(c);
    trace[k] = t;
  }
  const double df = cs.frequencies.size() > 1 ? cs.frequencies[1] : 1.0;

  // spectral peaks, strongest first, skipping any inside a stronger peak's half-maximum band
  std::vector<std::size_t> candidates;
  const std::size_t half = std::max<std::size_t>(8, bins / 16);
  for (std::size_t k = 1; k + 1 < bins; ++k) {
    if (trace[k] > trace[k - 1] && trace[k] >= trace[k + 1] && trace[k] > kPeakFactor * local_median(trace, k, half)) {
      candidates.push_back(k);
    }
  }
  std::sort(candidates.begin(), candidates.end(), [&](auto a, auto b) { return trace[a] > trace[b]; });
  std::vector<Peak> peaks;
  for (std::size_t k : candidates) {
    if (peaks.size() == family.complex) break;
    const double f = cs.frequencies[k];
    const bool shadowed = std::any_of(peaks.begin(), peaks.end(), [&](const Peak& p) { return f >= p.lo && f <= p.hi; });
    if (shadowed) continue;
    const auto lo = crossing(trace, cs.frequencies, k, -1, 0.5 * trace[k]);
    const auto hi = crossing(trace, cs.frequencies, k, +1, 0.5 * trace[k]);
    const double hw = lo && hi ? 0.5 * (*hi - *lo) : lo ? f - *lo : hi ? *hi - f : df;
    peaks.push_back({k, trace[k], lo.value_or(f - hw), hi.value_or(f + hw)});
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.bin < b.bin; });

  std::mt19937_64 rng(seed);
  std::vector<ComplexMode> cmodes;
  std::vector<Eigen::VectorXcd> cshapes;
  std::vector<int> cpins;
  for (const Peak& p : peaks) {
    const std::size_t k = p.bin;
    // parabolic refinement of the peak on log power
    double f = cs.frequencies[k];
    const double a = std::log(trace[k - 1]), b = std::log(trace[k]), c = std::log(trace[k + 1]);
    const double den = a - 2 * b + c;
    if (den < 0.0) f += 0.5 * (a - c) / den * df;
    // Hann main lobe adds about 0.72 bins of half width
    const double hw_obs = 0.5 * (p.hi - p.lo);
    const double window_hw = 0.72 * df;
    const double hw = std::sqrt(std::max(hw_obs * hw_obs - window_hw * window_hw, 0.0625 * df * df));
    cmodes.push_back({2 * std::numbers::pi * hw, 2 * std::numbers::pi * f});

    Eigen::MatrixXcd around = cs.matrices[k - 1] + cs.matrices[k] + cs.matrices[k + 1];
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(around);
    const Eigen::VectorXcd u = es.eigenvectors().col(channels - 1);
    Eigen::Index pin = 0;
    for (Eigen::Index ch = 1; ch < channels; ++ch) {
      if (std::abs(u(ch)) / sdev(ch) > std::abs(u(pin)) / sdev(pin)) pin = ch;
    }
    cshapes.push_back(u / u(pin));
    cpins.push_back(static_cast<int>(pin));
  }
  if (peaks.size() < family.complex) {
    if (log) {
      log("init: found " + std::to_string(peaks.size()) + " spectral peaks for " + std::to_string(family.complex) +
          " complex modes; using random log-spaced frequencies for the rest");
    }
    const double lo = std::log(4 * 2 * std::numbers::pi / std::max(summary.duration, dt));
    const double hi = std::log(0.5 * std::numbers::pi / dt);
    std::uniform_real_distribution<double> u(std::min(lo, hi), std::max(lo, hi));
    Eigen::Index loudest = 0;
    for (Eigen::Index ch = 1; ch < channels; ++ch) {
      if (summary.scale(ch) > summary.scale(loudest)) loudest = ch;
    }
    while (cmodes.size() < family.complex) {
      const double w = std::exp(u(rng));
      cmodes.push_back({0.1 * w, w});
      Eigen::VectorXcd shape = Eigen::VectorXcd::Zero(channels);
      shape(loudest) = 1.0;
      cshapes.push_back(shape);
      cpins.push_back(static_cast<int>(loudest));
    }
    std::vector<std::size_t> order(cmodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return cmodes[x].omega < cmodes[y].omega; });
    std::vector<ComplexMode> cm2;
    std::vector<Eigen::VectorXcd> cs2;
    std::vector<int> cp2;
    for (auto i : order) {
      cm2.push_back(cmodes[i]);
      cs2.push_back(cshapes[i]);
      cp2.push_back(cpins[i]);
    }
    cmodes = cm2;
    cshapes = cs2;
    cpins = cp2;
  }

  // real modes: knee of the low-frequency plateau
  std::vector<double> rates;
  std::vector<Vector> rshapes;
  std::vector<int> rpins;
  if (family.real > 0) {
    // running mean over a few bins steadies the plateau estimate
    const std::size_t h = std::max<std::size_t>(2, bins / 200);
    std::vector<double> smooth(bins, 0.0);
    for (std::size_t k = 1; k < bins; ++k) {
      const std::size_t lo = k > h ? k - h : 1;
      const std::size_t hi = std::min(bins - 1, k + h);
      for (std::size_t j = lo; j <= hi; ++j) smooth[k] += trace[j] / static_cast<double>(hi - lo + 1);
    }
    const std::size_t low = std::min(h + 1, bins - 1);
    const double level = smooth[low];
    Matrix lowm = Matrix::Zero(channels, channels);
    for (std::size_t k = 1; k <= low; ++k) lowm += cs.matrices[k].real();
    const auto knee = crossing(smooth, cs.frequencies, low, +1, 0.5 * level);
    const double lam = 2 * std::numbers::pi * knee.value_or(cs.frequencies[bins / 4]);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (lowm + lowm.transpose()));
    for (std::size_t j = 0; j < family.real; ++j) {
      rates.push_back(lam * std::pow(4.0, static_cast<double>(j) - 0.5 * static_cast<double>(family.real - 1)));
      const Vector v = es.eigenvectors().col(channels - 1 - static_cast<Eigen::Index>(j % static_cast<std::size_t>(channels)));
      Eigen::Index pin = 0;
      for (Eigen::Index ch = 1; ch < channels; ++ch) {
        if (std::abs(v(ch)) / sdev(ch) > std::abs(v(pin)) / sdev(pin)) pin = ch;
      }
      rshapes.push_back(v / v(pin));
      rpins.push_back(static_cast<int>(pin));
    }
  }

  m.spec.real_rates = rates;
  m.spec.complex_modes = cmodes;
  const Eigen::Index dim = m.spec.dimension();
  m.shapes.b = Matrix::Zero(channels, dim);
  m.noise_factor = Matrix::Zero(dim, dim);
  const double share = 1.0 / static_cast<double>(modes);
  for (std::size_t j = 0; j < family.real; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    m.shapes.b.col(col) = rshapes[j];
    m.shapes.b(rpins[j], col) = 1.0;
    m.shapes.pins.push_back(rpins[j]);
    m.noise_factor(col, col) = std::sqrt(2 * rates[j] * summary.scale(rpins[j]) * share);
  }
  for (std::size_t j = 0; j < family.complex; ++j) {
    const Eigen::Index col = m.spec.column_of(family.real + j);
    m.shapes.b.col(col) = cshapes[j].real();
    m.shapes.b.col(col + 1) = -cshapes[j].imag();
    m.shapes.b(cpins[j], col) = 1.0;
    m.shapes.b(cpins[j], col + 1) = 0.0;
    m.shapes.pins.push_back(cpins[j]);
    const double q = std::sqrt(2 * cmodes[j].alpha * summary.scale(cpins[j]) * share);
    m.noise_factor(col, col) = m.noise_factor(col + 1, col + 1) = q;
  }
  for (auto& c : m.spec.complex_modes) c.omega = std::max(c.omega, 2 * kMinModeFrequency);
  return m;
}

}  // namespace modesleuth
