#pragma once

// Periodograms of uniformly sampled series, log-log slopes and the power
// spectrum of a driven second-order oscillator.
//
// One-sided convention: P(f_k) = 2 dt |X_k|² / (N mean(w²)) for 0 < f_k <
// Nyquist (no factor 2 at DC and Nyquist), so white noise of variance v sits
// at 2 v dt and Σ P df equals the window-power weighted variance.

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "modesleuth/matfun.hpp"

namespace modesleuth {

struct Periodogram {
  std::vector<double> frequencies;  ///< Hz, ascending from 0 to Nyquist
  std::vector<double> power;        ///< one-sided PSD, value²/Hz
  std::string window;
  double duration = 0.0;            ///< N dt of one segment
  int segments = 1;
};

/// wᵢ = sin²(π i / (n - 1)).
std::vector<double> hann_window(std::size_t samples);

/// Single-window periodogram of a mean-removed series. Needs >= 64 samples.
Periodogram periodogram(std::span<const double> values, double dt, bool hann = true);

/// Welch average of Hann-windowed segments with 50% overlap.
Periodogram welch(std::span<const double> values, double dt, int segments = 8);

/// Returns the common spacing of `times`; NonUniform if spacings differ by
/// more than `rel_tol` relative.
double uniform_spacing(std::span<const double> times, double rel_tol = 1e-6);

/// Welch cross-spectral matrices of the columns of `series` (samples × channels).
struct CrossSpectrum {
  std::vector<double> frequencies;  ///< Hz
  std::vector<Eigen::MatrixXcd> matrices;
  double resolution = 0.0;          ///< bin width, Hz
};
CrossSpectrum welch_cross(const Matrix& series, double dt, int segments = 8);

struct SlopeFit {
  double slope = 0.0;
  double std_error = 0.0;
  double intercept = 0.0;  ///< log10 power at f = 1 Hz
  std::size_t bins = 0;
};

/// Least-squares slope of log P against log f over f_lo <= f <= f_hi (DC
/// excluded). InsufficientBand with fewer than 8 bins.
SlopeFit loglog_slope(const Periodogram& pg, double f_lo, double f_hi);

/// |x̂(Ω)|² = P(Ω) / ((k - mΩ²)² + β²Ω²) for m x'' + β x' + k x = forcing.
struct SecondOrderPsd {
  double mass = 1.0;
  double damping = 1.0;
  double stiffness = 1.0;
  std::function<double(double)> forcing = [](double) { return 1.0; };

  double displacement(double omega) const;
  /// Ω² |x̂(Ω)|²
  double velocity(double omega) const;
};
SecondOrderPsd second_order_psd(double mass, double damping, double stiffness,
                                std::function<double(double)> forcing = [](double) { return 1.0; });

}  // namespace modesleuth
