#include "modesleuth/spectral.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "modesleuth/errors.hpp"

namespace modesleuth {

namespace {

constexpr std::size_t kMinSamples = 64;

std::vector<std::complex<double>> windowed_fft(std::span<const double> x, const std::vector<double>& w) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> buf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = (x[i] - mean) * w[i];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> out;
  fft.fwd(out, buf);
  return out;
}

double mean_square(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return s / static_cast<double>(w.size());
}

// One-sided factor for bin k of an n-point transform.
double side_factor(std::size_t k, std::size_t n) { return (k == 0 || 2 * k == n) ? 1.0 : 2.0; }

void check_series(std::size_t n, double dt) {
  if (n < kMinSamples) throw Error(Errc::invalid_input, "spectral estimates need at least 64 samples");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(Errc::invalid_input, "sample spacing must be positive");
}

std::size_t welch_segment_length(std::size_t n, int segments) {
  if (segments < 1) throw Error(Errc::invalid_input, "segment count must be positive");
  // segments with 50% overlap cover (segments + 1) / 2 segment lengths
  const std::size_t len = 2 * n / static_cast<std::size_t>(segments + 1);
  if (len < kMinSamples) throw Error(Errc::invalid_input, "series too short for the requested Welch segments");
  return len;
}

}  // namespace

std::vector<double> hann_window(std::size_t samples) {
  if (samples < 2) throw Error(Errc::invalid_input, "Hann window needs at least 2 samples");
  std::vector<double> w(samples);
  const double denom = static_cast<double>(samples - 1);
  for (std::size_t i = 0; i < samples; ++i) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(i) / denom);
    w[i] = s * s;
  }
  w.front() = w.back() = 0.0;
  return w;
}

Periodogram periodogram(std::span<const double> values, double dt, bool hann) {
  const std::size_t n = values.size();
  check_series(n, dt);
  const std::vector<double> w = hann ? hann_window(n) : std::vector<double>(n, 1.0);
  const auto x = windowed_fft(values, w);
  const double norm = dt / (static_cast<double>(n) * mean_square(w));
  Periodogram pg;
  pg.window = hann ? "hann" : "rectangular";
  pg.duration = static_cast<double>(n) * dt;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    pg.frequencies.push_back(static_cast<double>(k) / pg.duration);
    pg.power.push_back(side_factor(k, n) * norm * std::norm(x[k]));
  }
  return pg;
}

Periodogram welch(std::span<const double> values, double dt, int segments) {
  const std::size_t n = values.size();
  check_series(n, dt);
  const std::size_t len = welch_segment_length(n, segments);
  const std::size_t hop = len / 2;
  Periodogram acc;
  int used = 0;
  for (std::size_t start = 0; start + len <= n; start += hop) {
    const Periodogram p = periodogram(values.subspan(start, len), dt, true);
    if (used == 0) {
      acc = p;
    } else {
      for (std::size_t k = 0; k < acc.power.size(); ++k) acc.power[k] += p.power[k];
    }
    ++used;
  }
  for (double& v : acc.power) v /= used;
  acc.segments = used;
  return acc;
}

double uniform_spacing(std::span<const double> times, double rel_tol) {
  if (times.size() < 2) throw Error(Errc::non_uniform, "need at least two times");
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) throw Error(Errc::non_uniform, "times must increase");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs(times[i] - times[i - 1] - dt) > rel_tol * dt) {
      throw Error(Errc::non_uniform, "sample times are not evenly spaced");
    }
  }
  return dt;
}

CrossSpectrum welch_cross(const Matrix& series, double dt, int segments) {
  const auto n = static_cast<std::size_t>(series.rows());
  const Eigen::Index m = series.cols();
  check_series(n, dt);
  const std::size_t len = welch_segment_length(n, segments);
  const std::size_t hop = len / 2;
  const std::vector<double> w = hann_window(len);
  const double norm = dt / (static_cast<double>(len) * mean_square(w));
  const std::size_t bins = len / 2 + 1;
  CrossSpectrum cs;
  cs.resolution = 1.0 / (static_cast<double>(len) * dt);
  for (std::size_t k = 0; k < bins; ++k) cs.frequencies.push_back(static_cast<double>(k) * cs.resolution);
  cs.matrices.assign(bins, Eigen::MatrixXcd::Zero(m, m));
  int used = 0;
  std::vector<double> column(n);
  for (std::size_t start = 0; start + len <= n; start += hop) {
    Eigen::MatrixXcd coeffs(static_cast<Eigen::Index>(bins), m);
    for (Eigen::Index c = 0; c < m; ++c) {
      for (std::size_t i = 0; i < len; ++i) column[i] = series(static_cast<Eigen::Index>(start + i), c);
      const auto x = windowed_fft(std::span<const double>(column.data(), len), w);
      for (std::size_t k = 0; k < bins; ++k) coeffs(static_cast<Eigen::Index>(k), c) = x[k];
    }
    for (std::size_t k = 0; k < bins; ++k) {
      const Eigen::VectorXcd v = coeffs.row(static_cast<Eigen::Index>(k)).transpose();
      cs.matrices[k] += side_factor(k, len) * norm * (v * v.adjoint());
    }
    ++used;
  }
  for (auto& mat : cs.matrices) mat /= static_cast<double>(used);
  return cs;
}

SlopeFit loglog_slope(const Periodogram& pg, double f_lo, double f_hi) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < pg.frequencies.size(); ++k) {
    const double f = pg.frequencies[k];
    if (f <= 0.0 || f < f_lo || f > f_hi || !(pg.power[k] > 0.0)) continue;
    xs.push_back(std::log10(f));
    ys.push_back(std::log10(pg.power[k]));
  }
  if (xs.size() < 8) throw Error(Errc::insufficient_band, "fewer than 8 frequency bins in the band");
  const double nb = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / nb;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / nb;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  SlopeFit fit;
  fit.bins = xs.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - fit.intercept - fit.slope * xs[i];
    rss += r * r;
  }
  fit.std_error = std::sqrt(rss / (nb - 2.0) / sxx);
  return fit;
}

double SecondOrderPsd::displacement(double omega) const {
  const double re = stiffness - mass * omega * omega;
  return forcing(omega) / (re * re + damping * damping * omega * omega);
}

double SecondOrderPsd::velocity(double omega) const { return omega * omega * displacement(omega); }

SecondOrderPsd second_order_psd(double mass, double damping, double stiffness, std::function<double(double)> forcing) {
  if (!(mass > 0.0) || !(damping > 0.0) || !(stiffness > 0.0)) {
    throw Error(Errc::invalid_input, "oscillator parameters must be positive");
  }
  return {mass, damping, stiffness, std::move(forcing)};
}

}  // namespace modesleuth
