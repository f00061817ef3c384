#include "modesleuth/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include "modesleuth/errors.hpp"
#include "modesleuth/sensitivity_filter.hpp"
#include "modesleuth/simulator.hpp"

namespace modesleuth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

struct StartOutcome {
  Vector theta;
  Objective objective;
  StartReport report;
};

Matrix fd_hessian(const ModeChart& chart, const Prior* prior, std::span<const ChannelRecord> records,
                  const Vector& theta, bool& ok) {
  const Eigen::Index d = theta.size();
  Matrix h(d, d);
  ok = true;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double step = 1e-4 * std::max(1.0, std::abs(theta(i)));
    Vector tp = theta, tm = theta;
    tp(i) += step;
    tm(i) -= step;
    const Objective fp = evaluate_objective(chart, prior, records, tp);
    const Objective fm = evaluate_objective(chart, prior, records, tm);
    if (!std::isfinite(fp.log_posterior) || !std::isfinite(fm.log_posterior)) {
      ok = false;
      h.col(i).setZero();
      continue;
    }
    h.col(i) = (fp.gradient - fm.gradient) / (2 * step);
  }
  return 0.5 * (h + h.transpose());
}

// Quasi-Newton ascent with Armijo backtracking. Slow runs (ridges of weakly
// identified directions) get their inverse Hessian replaced by a
// finite-difference one every kRefresh iterations.
StartOutcome ascend(const ModeChart& chart, const Prior* prior, std::span<const ChannelRecord> records, Vector theta,
                    const FitOptions& opts, int start) {
  StartOutcome out;
  out.report.start = start;
  Objective cur = evaluate_objective(chart, prior, records, theta);
  if (!std::isfinite(cur.log_posterior)) {
    out.theta = theta;
    out.objective = cur;
    out.report.log_posterior = cur.log_posterior;
    out.report.message = "non-finite log posterior at the starting point";
    return out;
  }
  const Eigen::Index d = theta.size();
  Matrix hinv = Matrix::Identity(d, d);
  bool scaled = false;
  int flat = 0;
  int it = 0;
  constexpr double kMaxMove = 2.0;
  constexpr int kRefresh = 60;
  for (; it < opts.max_iterations; ++it) {
    const Vector& g = cur.gradient;  // ascent direction uses +g
    if (g.cwiseAbs().maxCoeff() < opts.gradient_tol) {
      out.report.converged = true;
      out.report.message = "gradient tolerance reached";
      break;
    }
    if (it > 0 && it % kRefresh == 0) {
      bool ok = true;
      const Matrix h = fd_hessian(chart, prior, records, theta, ok);
      const Eigen::LLT<Matrix> llt(-h);
      if (ok && llt.info() == Eigen::Success) {
        hinv = llt.solve(Matrix::Identity(d, d));
        scaled = true;
      }
    }
    Vector dir = hinv * g;
    if (!(g.dot(dir) > 0.0)) {
      hinv.setIdentity();
      scaled = false;
      dir = g;
    }
    if (!scaled) dir /= std::max(1.0, g.norm());
    const double big = dir.cwiseAbs().maxCoeff();
    if (big > kMaxMove) dir *= kMaxMove / big;
    const double slope = g.dot(dir);

    double t = 1.0;
    bool accepted = false;
    Objective next;
    Vector trial;
    for (int k = 0; k < 50; ++k, t *= 0.5) {
      trial = theta + t * dir;
      next = evaluate_objective(chart, prior, records, trial);
      if (std::isfinite(next.log_posterior) && next.log_posterior >= cur.log_posterior + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.report.converged = g.cwiseAbs().maxCoeff() < 1e3 * opts.gradient_tol;
      out.report.message = "line search could not improve";
      break;
    }
    if (next.log_posterior < cur.log_posterior) throw std::logic_error("accepted step decreased the log posterior");

    const Vector s = trial - theta;
    const Vector y = cur.gradient - next.gradient;  // gradient of the negated objective
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = Matrix::Identity(d, d) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix v = Matrix::Identity(d, d) - rho * s * y.transpose();
      hinv = v * hinv * v.transpose() + rho * s * s.transpose();
    }
    const double gain = next.log_posterior - cur.log_posterior;
    theta = trial;
    cur = std::move(next);
    flat = gain < std::max(opts.value_tol * std::abs(cur.log_posterior), opts.value_abs_tol) ? flat + 1 : 0;
    if (flat >= 3) {
      out.report.converged = true;
      out.report.message = "objective stopped changing";
      ++it;
      break;
    }
  }
  if (it >= opts.max_iterations) out.report.message = "iteration limit reached";
  out.report.iterations = it;
  out.report.log_posterior = cur.log_posterior;
  out.theta = theta;
  out.objective = std::move(cur);
  return out;
}

Vector jitter(const ModeChart& chart, const Vector& theta0, std::uint64_t seed, int start) {
  if (start == 0) return theta0;
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(start)));
  std::normal_distribution<double> z(0.0, 1.0);
  Vector theta = theta0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    switch (chart.kind(i)) {
      case ParamKind::rate:
        theta(i) += 0.5 * z(rng);
        break;
      case ParamKind::frequency:
        theta(i) += 0.1 * z(rng);
        break;
      case ParamKind::shape: {
        theta(i) += 0.3 * (std::abs(theta(i)) + 0.3) * z(rng);
        break;
      }
      case ParamKind::lambda_diagonal:
        theta(i) += 0.5 * z(rng);
        break;
      case ParamKind::noise:
        theta(i) += z(rng);
        break;
      case ParamKind::lambda_offdiagonal:
      case ParamKind::mean:
        break;
    }
  }
  return theta;
}

}  // namespace

double DataSummary::scale(Eigen::Index c) const {
  const double v = variance(c);
  return v > 0.0 ? v : std::max(mean(c) * mean(c), 1.0);
}

DataSummary summarize(std::span<const ChannelRecord> records, Eigen::Index channels) {
  if (records.empty()) throw Error(Errc::invalid_input, "no records");
  if (channels < 1) throw Error(Errc::invalid_input, "need at least one channel");
  DataSummary s;
  s.channels = channels;
  s.records = records.size();
  Vector sum = Vector::Zero(channels), sq = Vector::Zero(channels);
  s.counts.assign(static_cast<std::size_t>(channels), 0);
  std::vector<double> gaps;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.values.size() != static_cast<Eigen::Index>(r.channels.size())) {
      throw Error(Errc::invalid_input, "record has mismatched channels and values");
    }
    for (std::size_t k = 0; k < r.channels.size(); ++k) {
      const int c = r.channels[k];
      if (c < 0 || c >= channels) throw Error(Errc::invalid_input, "record channel out of range");
      sum(c) += r.values(static_cast<Eigen::Index>(k));
      ++s.counts[static_cast<std::size_t>(c)];
    }
    if (i > 0 && r.time > records[i - 1].time) gaps.push_back(r.time - records[i - 1].time);
  }
  s.mean = Vector::Zero(channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    if (s.counts[static_cast<std::size_t>(c)] > 0) s.mean(c) = sum(c) / static_cast<double>(s.counts[static_cast<std::size_t>(c)]);
  }
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.channels.size(); ++k) {
      const double dv = r.values(static_cast<Eigen::Index>(k)) - s.mean(r.channels[k]);
      sq(r.channels[k]) += dv * dv;
    }
  }
  s.variance = Vector::Zero(channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const auto n = s.counts[static_cast<std::size_t>(c)];
    if (n > 1) s.variance(c) = sq(c) / static_cast<double>(n - 1);
    s.observations += n;
  }
  s.duration = records.back().time - records.front().time;
  s.median_dt = median(gaps);
  return s;
}

Vector default_noise_floor(const DataSummary& summary) {
  Vector f(summary.channels);
  for (Eigen::Index c = 0; c < summary.channels; ++c) f(c) = 1e-10 * summary.scale(c);
  return f;
}

double Prior::log_density(const Vector& theta) const {
  const Vector z = (theta - mean).cwiseQuotient(sd);
  const double log_norm = (sd.array().log() + 0.5 * std::log(2 * std::numbers::pi)).sum();
  return -0.5 * z.squaredNorm() - log_norm;
}

Vector Prior::gradient(const Vector& theta) const { return -(theta - mean).cwiseQuotient(sd.cwiseProduct(sd)); }

Vector Prior::curvature() const { return sd.cwiseProduct(sd).cwiseInverse(); }

Prior default_prior(const ModeChart& chart, const DataSummary& summary) {
  if (summary.channels != chart.channels()) throw Error(Errc::invalid_input, "summary and chart disagree on channels");
  const double duration = summary.duration > 0.0 ? summary.duration : 1.0;
  const double dt = summary.median_dt > 0.0 ? summary.median_dt : duration;
  const double rate_scale = std::sqrt((2 * std::numbers::pi / duration) * (std::numbers::pi / dt));
  const auto sdev = [&](Eigen::Index c) { return std::sqrt(summary.scale(c)); };
  const auto pin_of_state = [&](Eigen::Index col) { return chart.pins()[chart.mode_of_state(col)]; };
  const auto lambda_centre = [&](Eigen::Index col) {
    return std::log(sdev(pin_of_state(col)) * std::sqrt(2.0 * rate_scale));
  };

  Prior p;
  p.mean.resize(chart.dimension());
  p.sd.resize(chart.dimension());
  Eigen::Index lam_row = 0, lam_col = 0;
  for (Eigen::Index i = 0; i < chart.dimension(); ++i) {
    switch (chart.kind(i)) {
      case ParamKind::rate:
      case ParamKind::frequency:
        p.mean(i) = std::log(rate_scale);
        p.sd(i) = 2.0;
        break;
      case ParamKind::shape: {
        const auto [row, col] = chart.shape_entry(i - chart.shape_offset());
        p.mean(i) = 0.0;
        p.sd(i) = 10.0 * sdev(row) / sdev(pin_of_state(col));
        break;
      }
      case ParamKind::lambda_diagonal:
      case ParamKind::lambda_offdiagonal:
        if (chart.kind(i) == ParamKind::lambda_diagonal) {
          p.mean(i) = lambda_centre(lam_row);
          p.sd(i) = 3.0;
        } else {
          p.mean(i) = 0.0;
          p.sd(i) = 3.0 * std::exp(lambda_centre(lam_row));
        }
        if (++lam_col > lam_row) {
          ++lam_row;
          lam_col = 0;
        }
        break;
      case ParamKind::mean: {
        const int g = static_cast<int>(i - chart.mean_offset());
        double centre = 0.0, spread = 0.0;
        int members = 0;
        for (Eigen::Index c = 0; c < chart.channels(); ++c) {
          if (chart.options().mean_groups[static_cast<std::size_t>(c)] != g) continue;
          centre += summary.mean(c);
          spread = std::max(spread, sdev(c));
          ++members;
        }
        p.mean(i) = centre / std::max(members, 1);
        p.sd(i) = 10.0 * spread;
        break;
      }
      case ParamKind::noise: {
        const Eigen::Index c = i - chart.noise_offset();
        p.mean(i) = std::log(0.01 * summary.scale(c));
        p.sd(i) = 4.0;
        break;
      }
    }
  }
  return p;
}

std::string ModeFamily::label() const { return "(" + std::to_string(real) + "," + std::to_string(complex) + ")"; }

Objective evaluate_objective(const ModeChart& chart, const Prior* prior, std::span<const ChannelRecord> records,
                             const Vector& theta) {
  Objective o;
  try {
    const ChannelModel cm = chart.channel_model(theta, true);
    const EvidenceGradient eg = evidence_with_gradient(cm, records);
    o.log_likelihood = eg.evidence;
    o.log_posterior = eg.evidence;
    o.gradient = eg.gradient;
    if (prior) {
      o.log_posterior += prior->log_density(theta);
      o.gradient += prior->gradient(theta);
    }
  } catch (const Error&) {
    o.log_posterior = o.log_likelihood = kNegInf;
    o.gradient = Vector::Zero(theta.size());
    return o;
  }
  if (!std::isfinite(o.log_posterior) || !o.gradient.allFinite()) {
    o.log_posterior = o.log_likelihood = kNegInf;
    o.gradient = Vector::Zero(theta.size());
  }
  return o;
}

FitResult fit_mle(const ModeFamily& family, Eigen::Index channels, std::span<const ChannelRecord> records,
                  const FitOptions& options) {
  const DataSummary summary = summarize(records, channels);
  const ModeModel start = options.start ? *options.start
                                        : init_heuristic(family, channels, records, options.seed, options.log);
  if (start.spec.real_count() != family.real || start.spec.complex_count() != family.complex ||
      start.channels() != channels) {
    throw Error(Errc::invalid_model, "starting model does not match the family");
  }
  ChartOptions copts = options.chart;
  if (copts.noise_floor.size() == 0) copts.noise_floor = default_noise_floor(summary);
  const ModeChart chart = ModeChart::for_model(start, copts);

  // Shared means and noise floors may not hold for the starting model; repair.
  ModeModel seeded = start;
  for (Eigen::Index c = 0; c < channels; ++c) {
    const int g = chart.options().mean_groups[static_cast<std::size_t>(c)];
    double m = 0.0;
    int members = 0;
    for (Eigen::Index o = 0; o < channels; ++o) {
      if (chart.options().mean_groups[static_cast<std::size_t>(o)] == g) {
        m += start.channel_means(o);
        ++members;
      }
    }
    seeded.channel_means(c) = m / members;
    if (chart.options().fit_noise) {
      seeded.meas_noise(c) = std::max(seeded.meas_noise(c), 2.0 * chart.options().noise_floor(c));
    } else {
      seeded.meas_noise(c) = chart.options().fixed_noise(c);
    }
  }
  const Vector theta0 = chart.pack(seeded);
  if (chart.dimension() >= summary.observations) {
    say(options.log, "warning: family " + family.label() + " has " + std::to_string(chart.dimension()) +
                         " parameters for " + std::to_string(summary.observations) + " observations");
  }

  std::optional<Prior> prior;
  if (options.use_prior) prior = options.prior ? *options.prior : default_prior(chart, summary);
  if (prior && (prior->mean.size() != chart.dimension() || prior->sd.size() != chart.dimension())) {
    throw Error(Errc::invalid_input, "prior dimension does not match the chart");
  }
  const Prior* prior_ptr = prior ? &*prior : nullptr;

  const int starts = std::max(1, options.starts);
  std::vector<StartOutcome> outcomes(static_cast<std::size_t>(starts));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int s = next++; s < starts; s = next++) {
      try {
        outcomes[static_cast<std::size_t>(s)] =
            ascend(chart, prior_ptr, records, jitter(chart, theta0, options.seed, s), options, s);
      } catch (const Error& e) {
        outcomes[static_cast<std::size_t>(s)].objective.log_posterior = kNegInf;
        outcomes[static_cast<std::size_t>(s)].report = {s, kNegInf, 0, false, e.what()};
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, starts);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int s = 0; s < starts; ++s) {
    const double v = outcomes[static_cast<std::size_t>(s)].objective.log_posterior;
    if (std::isfinite(v) && (best < 0 || v > outcomes[static_cast<std::size_t>(best)].objective.log_posterior)) best = s;
  }
  if (best < 0) {
    std::string msg = "all " + std::to_string(starts) + " starts diverged for family " + family.label();
    for (const auto& o : outcomes) msg += "; start " + std::to_string(o.report.start) + ": " + o.report.message;
    throw Error(Errc::no_convergence, msg);
  }

  const StartOutcome& win = outcomes[static_cast<std::size_t>(best)];
  FitResult r{chart};
  r.family = family;
  r.theta = win.theta;
  r.model = chart.unpack(win.theta);
  r.log_likelihood = win.objective.log_likelihood;
  r.log_prior = prior ? prior->log_density(win.theta) : 0.0;
  r.log_posterior = win.objective.log_posterior;
  r.observations = summary.observations;
  r.best_start = best;
  for (const auto& o : outcomes) r.starts.push_back(o.report);

  bool ok = true;
  r.hessian = fd_hessian(chart, prior_ptr, records, win.theta, ok);
  const Eigen::Index d = chart.dimension();
  r.posterior_sd = Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
  r.laplace_log_z = std::numeric_limits<double>::quiet_NaN();
  if (ok && d > 0) {
    const Eigen::LLT<Matrix> llt(-r.hessian);
    if (llt.info() == Eigen::Success) {
      r.negative_definite = true;
      const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
      const double log_det = 2.0 * diag.array().log().sum();
      r.laplace_log_z = r.log_posterior + 0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi) - 0.5 * log_det;
      r.posterior_sd = llt.solve(Matrix::Identity(d, d)).diagonal().cwiseSqrt();
    }
  } else if (d == 0) {
    r.negative_definite = true;
    r.laplace_log_z = r.log_posterior;
  }
  r.bic = r.log_likelihood - 0.5 * static_cast<double>(d) * std::log(static_cast<double>(summary.observations));
  say(options.log, "family " + family.label() + ": best start " + std::to_string(best) +
                       ", log posterior " + std::to_string(r.log_posterior));
  return r;
}

ModelPosterior compare_models(std::span<const ModeFamily> candidates, Eigen::Index channels,
                              std::span<const ChannelRecord> records, const FitOptions& options) {
  if (candidates.empty()) throw Error(Errc::invalid_input, "no candidate families");
  ModelPosterior post;
  for (const auto& fam : candidates) {
    FitOptions o = options;
    o.seed = derive_seed(options.seed, 1000 * fam.real + fam.complex);
    FitResult fit = fit_mle(fam, channels, records, o);
    CandidateResult c{fam, 0.0, false, 0.0, std::move(fit)};
    if (c.fit.negative_definite) {
      c.log_z = c.fit.laplace_log_z;
    } else {
      c.log_z = c.fit.bic;
      c.used_bic = true;
      say(options.log, "family " + fam.label() + ": Hessian not negative definite, using BIC");
    }
    post.candidates.push_back(std::move(c));
  }
  double top = kNegInf;
  for (const auto& c : post.candidates) top = std::max(top, c.log_z);
  double total = 0.0;
  for (auto& c : post.candidates) total += (c.probability = std::exp(c.log_z - top));
  for (auto& c : post.candidates) c.probability /= total;

  std::size_t best = 0;
  for (std::size_t i = 1; i < post.candidates.size(); ++i) {
    if (post.candidates[i].log_z > post.candidates[best].log_z) best = i;
  }
  std::size_t chosen = best;
  for (std::size_t i = 0; i < post.candidates.size(); ++i) {
    const auto& c = post.candidates[i];
    if (c.log_z >= post.candidates[best].log_z - 1.0 &&
        c.family.dimension() < post.candidates[chosen].family.dimension()) {
      chosen = i;
    }
  }
  post.selected = chosen;
  return post;
}

}  // namespace modesleuth
