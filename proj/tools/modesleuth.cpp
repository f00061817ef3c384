// modesleuth: simulate, fit, stream, compare and spectrum subcommands.
// Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "modesleuth/csv_io.hpp"
#include "modesleuth/errors.hpp"
#include "modesleuth/estimator.hpp"
#include "modesleuth/grid_model.hpp"
#include "modesleuth/kernels.hpp"
#include "modesleuth/model_io.hpp"
#include "modesleuth/simulator.hpp"
#include "modesleuth/spectral.hpp"
#include "modesleuth/tracker.hpp"

using namespace modesleuth;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_input:
    case Errc::invalid_times:
    case Errc::invalid_scheme:
    case Errc::invalid_tree:
    case Errc::invalid_graph:
    case Errc::non_uniform:
    case Errc::insufficient_band:
    case Errc::invalid_model:
    case Errc::parse_error:
      return 2;
    default:
      return 1;
  }
}

void stderr_log(std::string_view s) { std::cerr << s << '\n'; }

int thread_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* cap = std::getenv("MODE_SLEUTH_THREADS")) {
    const int c = std::atoi(cap);
    if (c > 0) n = std::min(n, c);
  }
  return n;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::invalid_input, "cannot write " + path);
  out << text;
}

ChannelTable load_table(const std::string& path) {
  if (path.empty() || path == "-") return read_csv(std::cin);
  return read_csv_file(path);
}

// ---- simulate ----

struct SimulateConfig {
  std::string model = "ou";
  std::string grid;
  std::vector<int> pmus;
  double mu = 1.0, sigma = 1.0;
  double mass = 1.0, damping = 1.0, stiffness = 1.0;
  double gamma = 1.0, j = 2.0;
  double dt = 0.1, t0 = 0.0;
  std::size_t n = 1000;
  double noise = 0.0, keep = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simulate(const SimulateConfig& cfg) {
  if (!(cfg.dt > 0.0) || cfg.n < 1) throw UsageError("--dt must be positive and --n at least 1");
  if (!(cfg.noise >= 0.0)) throw UsageError("--noise must be non-negative");
  json model_doc;
  LtiSystem system(Matrix::Zero(1, 1) - Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  Matrix observation;
  Vector offsets;
  Vector noise;
  std::vector<std::string> names;
  const std::string kind = cfg.grid.empty() ? cfg.model : "grid";

  auto scalar = [&](const KernelParams& p, const std::string& name) {
    const KernelRealization kr = kernel_realization(p);
    system = kr.system;
    observation = Matrix::Zero(1, kr.system.dimension());
    observation(0, kr.observed) = 1.0;
    offsets = Vector::Zero(1);
    names = {name};
  };
  if (kind == "ou") {
    scalar(OuKernel{cfg.mu, cfg.sigma}, "x");
    model_doc = {{"builtin", "ou"}, {"mu", cfg.mu}, {"sigma", cfg.sigma}};
  } else if (kind == "langevin") {
    scalar(LangevinKernel{cfg.mass, cfg.damping, cfg.stiffness, cfg.sigma}, "x");
    model_doc = {{"builtin", "langevin"}, {"mass", cfg.mass}, {"damping", cfg.damping},
                 {"stiffness", cfg.stiffness}, {"sigma", cfg.sigma}};
  } else if (kind == "fou") {
    scalar(FouKernel{1.0, cfg.gamma, cfg.j, cfg.sigma}, "f");
    model_doc = {{"builtin", "fou"}, {"gamma", cfg.gamma}, {"j", cfg.j}, {"sigma", cfg.sigma}};
  } else if (kind == "grid") {
    if (cfg.grid.empty()) throw UsageError("--model grid needs --grid <file>");
    const GridParams params = grid_params_from_json(read_json_file(cfg.grid));
    std::vector<int> pmus = cfg.pmus;
    if (pmus.empty()) {
      for (int i = 0; i < params.nodes(); ++i) pmus.push_back(i);
    }
    const JointGridSystem jgs = assemble_joint(params);
    const GridObservation obs = grid_observation(params, pmus);
    system = jgs.joint();
    observation = obs.joint_map(jgs.imbalance_dim());
    offsets = Vector::Zero(observation.rows());
    names = obs.channel_names;
    model_doc = {{"builtin", "grid"}, {"grid", to_json(params)}, {"pmus", pmus}};
  } else {
    const json doc = read_json_file(cfg.model);
    const ModeModel m = mode_model_from_json(doc);
    const ModeRealization r = mode_realize(m);
    system = r.system;
    observation = r.observation;
    offsets = r.channel_means;
    names = channel_names_from_json(doc);
    if (names.empty()) {
      for (Eigen::Index c = 0; c < m.channels(); ++c) names.push_back("y" + std::to_string(c));
    }
    model_doc = to_json(m, names);
    // the model's own measurement noise unless --noise is given
    if (cfg.noise == 0.0) noise = r.meas_noise;
  }

  const auto times = regular_times(cfg.n, cfg.dt, cfg.t0);
  const SamplePath path = sample_path(system, times, InitialCondition::stationary(), derive_seed(cfg.seed, 1));
  if (noise.size() == 0) noise = Vector::Constant(observation.rows(), cfg.noise);
  ChannelTable table{names, observe_channels(path, observation, offsets, noise, derive_seed(cfg.seed, 2), cfg.keep)};
  std::ostringstream csv;
  write_csv(csv, table);
  write_text(cfg.out, csv.str());
  if (!cfg.out.empty() && cfg.out != "-") {
    write_json_file(metadata_path(cfg.out),
                    {{"format", "modesleuth-sim/1"}, {"model", model_doc}, {"channels", names},
                     {"scheme", {{"kind", "regular"}, {"dt", cfg.dt}, {"n", cfg.n}, {"t0", cfg.t0},
                                 {"keep_probability", cfg.keep}, {"meas_noise", vector_to_json(noise)}}},
                     {"seed", cfg.seed}, {"rng", "mt19937_64 via splitmix64 sub-seeds"}});
  }
  return 0;
}

// ---- fit ----

struct FitConfig {
  std::string data;
  int real = -1, complex = -1;
  int starts = 8, max_iterations = 200, threads = 0;
  std::uint64_t seed = 0;
  bool no_prior = false;
  std::string out, diagnostics, format = "json";
};

json fit_report(const FitResult& r, const std::vector<std::string>& names, std::uint64_t seed) {
  json starts = json::array();
  for (const auto& s : r.starts) {
    starts.push_back({{"start", s.start}, {"log_posterior", s.log_posterior}, {"iterations", s.iterations},
                      {"converged", s.converged}, {"message", s.message}});
  }
  return {{"family", {{"real", r.family.real}, {"complex", r.family.complex}}},
          {"theta_hat", vector_to_json(r.theta)},
          {"log_evidence", r.log_likelihood},
          {"log_prior", r.log_prior},
          {"log_posterior", r.log_posterior},
          {"laplace_log_z", r.laplace_log_z},
          {"bic", r.bic},
          {"posterior_sd", vector_to_json(r.posterior_sd)},
          {"negative_definite", r.negative_definite},
          {"observations", r.observations},
          {"seed", seed},
          {"best_start", r.best_start},
          {"starts", starts},
          {"model", to_json(r.model, names)}};
}

// One row per mode: rate, frequency, stationary amplitude √diag S and shape columns.
std::string mode_table_csv(const ModeModel& m, const std::vector<std::string>& names) {
  const Matrix s = mode_stationary_covariance(m);
  std::ostringstream out;
  out << "mode,kind,rate,omega,amplitude";
  for (const auto& n : names) out << ",b_" << n;
  for (const auto& n : names) out << ",b1_" << n;
  out << '\n';
  for (std::size_t k = 0; k < m.spec.mode_count(); ++k) {
    const Eigen::Index col = m.spec.column_of(k);
    const bool cx = m.spec.is_complex(k);
    const double rate = cx ? m.spec.complex_modes[k - m.spec.real_count()].alpha : m.spec.real_rates[k];
    out << k << ',' << (cx ? "complex" : "real") << ',' << format_double(rate) << ','
        << (cx ? format_double(m.spec.complex_modes[k - m.spec.real_count()].omega) : "") << ','
        << format_double(std::sqrt(s(col, col)));
    for (Eigen::Index c = 0; c < m.channels(); ++c) out << ',' << format_double(m.shapes.b(c, col));
    for (Eigen::Index c = 0; c < m.channels(); ++c) out << ',' << (cx ? format_double(m.shapes.b(c, col + 1)) : "");
    out << '\n';
  }
  return out.str();
}

int cmd_fit(const FitConfig& cfg) {
  if (cfg.real < 0 || cfg.complex < 0) throw UsageError("fit needs --real R --complex C");
  if (cfg.format != "json" && cfg.format != "csv") throw UsageError("--format must be json or csv");
  const ChannelTable table = load_table(cfg.data);
  FitOptions o;
  o.starts = cfg.starts;
  o.max_iterations = cfg.max_iterations;
  o.seed = cfg.seed;
  o.threads = thread_count(cfg.threads);
  o.use_prior = !cfg.no_prior;
  o.log = stderr_log;
  const ModeFamily family{static_cast<std::size_t>(cfg.real), static_cast<std::size_t>(cfg.complex)};
  try {
    const FitResult r = fit_mle(family, static_cast<Eigen::Index>(table.channels.size()), table.records, o);
    const json report = fit_report(r, table.channels, cfg.seed);
    if (!cfg.out.empty()) write_json_file(cfg.out, report);
    if (cfg.format == "json") {
      std::cout << report.dump(2) << '\n';
    } else {
      std::cout << mode_table_csv(r.model, table.channels);
    }
  } catch (const Error& e) {
    if (e.code() != Errc::no_convergence) throw;
    const std::string path =
        !cfg.diagnostics.empty() ? cfg.diagnostics : (cfg.out.empty() ? std::string("fit") : cfg.out) + ".diagnostics.txt";
    write_text(path, std::string(e.what()) + '\n');
    std::cerr << "error: " << e.what() << "\ndiagnostics written to " << path << '\n';
    return 1;
  }
  return 0;
}

// ---- stream ----

struct StreamConfig {
  std::string data = "-";
  double forget = -1.0;
  std::string model;
  int real = -1, complex = -1;
  std::size_t init_records = 2000;
  double step = 0.5, max_step = 0.1;
  bool decaying_step = false, no_prior = false;
  std::size_t warmup = 20, every = 1;
  std::uint64_t seed = 0;
};

int cmd_stream(const StreamConfig& cfg) {
  if (cfg.forget < 0.0) throw UsageError("stream needs --forget <rate>");
  const bool from_model = !cfg.model.empty();
  if (!from_model && (cfg.real < 0 || cfg.complex < 0)) {
    throw UsageError("stream needs --model <json> or --real R --complex C");
  }
  if (cfg.every < 1) throw UsageError("--every must be at least 1");

  std::ifstream file;
  std::istream* in = &std::cin;
  if (!cfg.data.empty() && cfg.data != "-") {
    file.open(cfg.data, std::ios::binary);
    if (!file) throw Error(Errc::invalid_input, "cannot read " + cfg.data);
    in = &file;
  }
  std::string line;
  std::size_t lineno = 0, skipped = 0;
  std::vector<std::string> names;
  while (names.empty() && std::getline(*in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    names = parse_csv_header(line);
  }
  if (names.empty()) throw Error(Errc::parse_error, "stream has no CSV header");
  const auto channels = static_cast<Eigen::Index>(names.size());

  TrackOptions o;
  o.forget = cfg.forget;
  o.step = cfg.step;
  o.max_step = cfg.max_step;
  o.decaying_step = cfg.decaying_step;
  o.warmup = cfg.warmup;
  o.log = stderr_log;

  std::optional<StreamTracker> tracker;
  std::vector<ChannelRecord> buffer;
  std::size_t emitted = 0;
  const auto emit = [&](const TrackPoint& p) {
    if (emitted++ % cfg.every == 0) std::cout << track_point_json(tracker->chart(), p).dump() << '\n';
  };
  const auto start = [&](ModeModel init) {
    ChartOptions copt;
    if (!buffer.empty()) copt.noise_floor = default_noise_floor(summarize(buffer, channels));
    ModeChart chart = ModeChart::for_model(init, copt);
    if (!cfg.no_prior && !buffer.empty()) o.prior = default_prior(chart, summarize(buffer, channels));
    Vector theta0 = chart.pack(init);
    tracker.emplace(std::move(chart), std::move(theta0), o);
  };

  if (from_model) {
    json doc = read_json_file(cfg.model);
    if (doc.contains("model")) doc = doc.at("model");
    ModeModel m = mode_model_from_json(doc);
    if (m.channels() != channels) throw Error(Errc::invalid_input, "model channel count does not match the stream");
    start(std::move(m));
  }

  double t_last = -std::numeric_limits<double>::infinity();
  while (std::getline(*in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::optional<ChannelRecord> rec;
    try {
      rec = parse_csv_row(line, names.size());
      if (rec && rec->time < t_last) throw Error(Errc::invalid_times, "time goes backwards");
    } catch (const Error& e) {
      ++skipped;
      std::cerr << "warning: line " << lineno << " skipped: " << e.what() << '\n';
      continue;
    }
    if (!rec) continue;
    t_last = rec->time;
    if (tracker) {
      emit(tracker->push(*rec));
      continue;
    }
    buffer.push_back(std::move(*rec));
    if (buffer.size() == cfg.init_records) {
      const ModeFamily fam{static_cast<std::size_t>(cfg.real), static_cast<std::size_t>(cfg.complex)};
      start(init_heuristic(fam, channels, buffer, cfg.seed, stderr_log));
      for (const auto& r : buffer) emit(tracker->push(r));
    }
  }
  if (!tracker && !buffer.empty()) {
    const ModeFamily fam{static_cast<std::size_t>(cfg.real), static_cast<std::size_t>(cfg.complex)};
    start(init_heuristic(fam, channels, buffer, cfg.seed, stderr_log));
    for (const auto& r : buffer) emit(tracker->push(r));
  }
  std::cout.flush();
  if (tracker && tracker->rejected_steps() > 0) {
    std::cerr << "rejected " << tracker->rejected_steps() << " parameter steps\n";
  }
  std::cerr << "skipped " << skipped << " malformed lines\n";
  return 0;
}

// ---- compare ----

struct CompareConfig {
  std::string data;
  int max_real = -1, max_complex = -1;
  std::string candidates;
  int starts = 8, max_iterations = 200, threads = 0;
  std::uint64_t seed = 0;
  bool no_prior = false;
  std::string out, format = "json";
};

std::vector<ModeFamily> parse_candidates(const std::string& spec) {
  std::vector<ModeFamily> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("candidate '" + item + "' is not R:C");
    try {
      const int r = std::stoi(item.substr(0, colon)), c = std::stoi(item.substr(colon + 1));
      if (r < 0 || c < 0) throw UsageError("candidate counts must be non-negative");
      out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
    } catch (const std::logic_error&) {
      throw UsageError("candidate '" + item + "' is not R:C");
    }
  }
  return out;
}

int cmd_compare(const CompareConfig& cfg) {
  if (cfg.format != "json" && cfg.format != "csv") throw UsageError("--format must be json or csv");
  std::vector<ModeFamily> cands;
  if (!cfg.candidates.empty()) {
    cands = parse_candidates(cfg.candidates);
  } else {
    if (cfg.max_real < 0 || cfg.max_complex < 0) throw UsageError("compare needs --max-real and --max-complex");
    for (int r = 0; r <= cfg.max_real; ++r) {
      for (int c = 0; c <= cfg.max_complex; ++c) cands.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
    }
  }
  if (cands.empty()) throw UsageError("no candidates");
  const ChannelTable table = load_table(cfg.data);
  FitOptions o;
  o.starts = cfg.starts;
  o.max_iterations = cfg.max_iterations;
  o.seed = cfg.seed;
  o.threads = thread_count(cfg.threads);
  o.use_prior = !cfg.no_prior;
  o.log = stderr_log;
  const ModelPosterior post = compare_models(cands, static_cast<Eigen::Index>(table.channels.size()), table.records, o);

  json rows = json::array();
  std::ostringstream csv;
  csv << "real,complex,log_z,used_bic,laplace_log_z,bic,log_evidence,probability,selected\n";
  for (std::size_t i = 0; i < post.candidates.size(); ++i) {
    const auto& c = post.candidates[i];
    rows.push_back({{"real", c.family.real}, {"complex", c.family.complex}, {"log_z", c.log_z},
                    {"used_bic", c.used_bic}, {"laplace_log_z", c.fit.laplace_log_z}, {"bic", c.fit.bic},
                    {"log_evidence", c.fit.log_likelihood}, {"probability", c.probability},
                    {"model", to_json(c.fit.model, table.channels)}});
    csv << c.family.real << ',' << c.family.complex << ',' << format_double(c.log_z) << ','
        << (c.used_bic ? "true" : "false") << ',' << format_double(c.fit.laplace_log_z) << ','
        << format_double(c.fit.bic) << ',' << format_double(c.fit.log_likelihood) << ','
        << format_double(c.probability) << ',' << (i == post.selected ? "true" : "false") << '\n';
  }
  const auto& sel = post.candidates[post.selected].family;
  const json report{{"candidates", rows}, {"selected", {{"real", sel.real}, {"complex", sel.complex}}}, {"seed", cfg.seed}};
  if (!cfg.out.empty()) write_json_file(cfg.out, report);
  if (cfg.format == "json") {
    std::cout << report.dump(2) << '\n';
  } else {
    std::cout << csv.str();
  }
  return 0;
}

// ---- spectrum ----

struct SpectrumConfig {
  std::string data;
  std::string channel;
  int segments = 1;
  bool no_hann = false;
  std::vector<std::string> bands;
  std::string out, report, format = "json";
};

int cmd_spectrum(const SpectrumConfig& cfg) {
  if (cfg.format != "json" && cfg.format != "csv") throw UsageError("--format must be json or csv");
  if (cfg.segments < 1) throw UsageError("--segments must be at least 1");
  const ChannelTable table = load_table(cfg.data);
  std::size_t ch = 0;
  if (!cfg.channel.empty()) {
    const auto it = std::find(table.channels.begin(), table.channels.end(), cfg.channel);
    if (it == table.channels.end()) throw UsageError("no channel named '" + cfg.channel + "'");
    ch = static_cast<std::size_t>(it - table.channels.begin());
  }
  const ChannelSeries s = channel_series(table, ch);
  if (s.times.size() < 2) throw Error(Errc::invalid_input, "channel has fewer than two samples");
  const double dt = uniform_spacing(s.times);
  const Periodogram pg = cfg.segments == 1 ? periodogram(s.values, dt, !cfg.no_hann) : welch(s.values, dt, cfg.segments);

  std::ostringstream csv;
  csv << "freq_hz,power\n";
  for (std::size_t k = 0; k < pg.frequencies.size(); ++k) {
    csv << format_double(pg.frequencies[k]) << ',' << format_double(pg.power[k]) << '\n';
  }
  write_text(cfg.out, csv.str());

  if (cfg.bands.empty()) return 0;
  json slopes = json::array();
  std::ostringstream rep;
  rep << "f_lo,f_hi,slope,std_error,bins\n";
  for (const auto& b : cfg.bands) {
    const auto colon = b.find(':');
    if (colon == std::string::npos) throw UsageError("band '" + b + "' is not LO:HI");
    double lo = 0.0, hi = 0.0;
    try {
      lo = std::stod(b.substr(0, colon));
      hi = std::stod(b.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw UsageError("band '" + b + "' is not LO:HI");
    }
    const SlopeFit f = loglog_slope(pg, lo, hi);
    slopes.push_back({{"f_lo", lo}, {"f_hi", hi}, {"slope", f.slope}, {"std_error", f.std_error}, {"bins", f.bins}});
    rep << format_double(lo) << ',' << format_double(hi) << ',' << format_double(f.slope) << ','
        << format_double(f.std_error) << ',' << f.bins << '\n';
  }
  const std::string text =
      cfg.format == "json" ? json{{"channel", table.channels[ch]}, {"slopes", slopes}}.dump(2) + "\n" : rep.str();
  if (!cfg.report.empty()) {
    write_text(cfg.report, text);
  } else if (cfg.out.empty() || cfg.out == "-") {
    std::cerr << text;
  } else {
    std::cout << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mode estimation for linear stochastic processes"};
  app.require_subcommand(1);

  SimulateConfig sim;
  auto* s = app.add_subcommand("simulate", "Sample a model at regular times and write CSV");
  s->add_option("--model", sim.model, "ou, langevin, fou, grid or a mode-model JSON file")->capture_default_str();
  s->add_option("--grid", sim.grid, "grid-model JSON file");
  s->add_option("--pmus", sim.pmus, "node indices (0-based) carrying a PMU")->delimiter(',');
  s->add_option("--mu", sim.mu, "OU decay rate")->capture_default_str();
  s->add_option("--sigma", sim.sigma, "noise amplitude")->capture_default_str();
  s->add_option("--mass", sim.mass)->capture_default_str();
  s->add_option("--damping", sim.damping)->capture_default_str();
  s->add_option("--stiffness", sim.stiffness)->capture_default_str();
  s->add_option("--gamma", sim.gamma, "FOU frequency damping rate")->capture_default_str();
  s->add_option("--j", sim.j, "FOU imbalance relaxation rate")->capture_default_str();
  s->add_option("--dt", sim.dt)->capture_default_str();
  s->add_option("--t0", sim.t0)->capture_default_str();
  s->add_option("--n", sim.n, "number of rows")->capture_default_str();
  s->add_option("--noise", sim.noise, "measurement noise variance (0 keeps a model file's own)")->capture_default_str();
  s->add_option("--keep", sim.keep, "probability that each channel is observed")->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--out", sim.out, "CSV path (stdout if omitted); metadata goes to <out>.meta.json");

  FitConfig fit;
  auto* f = app.add_subcommand("fit", "Fit a mode model to CSV data");
  f->add_option("--data", fit.data, "CSV path or - for stdin")->required();
  f->add_option("--real", fit.real)->required();
  f->add_option("--complex", fit.complex)->required();
  f->add_option("--starts", fit.starts)->capture_default_str();
  f->add_option("--max-iter", fit.max_iterations)->capture_default_str();
  f->add_option("--seed", fit.seed)->capture_default_str();
  f->add_option("--threads", fit.threads, "0 uses all cores (capped by MODE_SLEUTH_THREADS)");
  f->add_flag("--no-prior", fit.no_prior, "plain maximum likelihood");
  f->add_option("--out", fit.out, "fit report JSON");
  f->add_option("--diagnostics", fit.diagnostics, "written when no start converges");
  f->add_option("--format", fit.format, "json report or csv mode table on stdout")->capture_default_str();

  StreamConfig st;
  auto* t = app.add_subcommand("stream", "Track mode parameters record by record; JSON lines out");
  t->add_option("--data", st.data, "CSV path or - for stdin")->capture_default_str();
  t->add_option("--forget", st.forget, "forgetting rate λ (0 requires --decaying-step)")->required();
  t->add_option("--model", st.model, "starting mode-model JSON (or a fit report)");
  t->add_option("--real", st.real);
  t->add_option("--complex", st.complex);
  t->add_option("--init-records", st.init_records, "records used for the spectral start")->capture_default_str();
  t->add_option("--step", st.step)->capture_default_str();
  t->add_option("--max-step", st.max_step)->capture_default_str();
  t->add_flag("--decaying-step", st.decaying_step);
  t->add_option("--warmup", st.warmup)->capture_default_str();
  t->add_flag("--no-prior", st.no_prior);
  t->add_option("--every", st.every, "emit every k-th record")->capture_default_str();
  t->add_option("--seed", st.seed)->capture_default_str();

  CompareConfig cmp;
  auto* c = app.add_subcommand("compare", "Posterior over mode counts");
  c->add_option("--data", cmp.data, "CSV path or - for stdin")->required();
  c->add_option("--max-real", cmp.max_real);
  c->add_option("--max-complex", cmp.max_complex);
  c->add_option("--candidates", cmp.candidates, "explicit list R:C,R:C,...");
  c->add_option("--starts", cmp.starts)->capture_default_str();
  c->add_option("--max-iter", cmp.max_iterations)->capture_default_str();
  c->add_option("--seed", cmp.seed)->capture_default_str();
  c->add_option("--threads", cmp.threads);
  c->add_flag("--no-prior", cmp.no_prior);
  c->add_option("--out", cmp.out, "report JSON");
  c->add_option("--format", cmp.format)->capture_default_str();

  SpectrumConfig sp;
  auto* p = app.add_subcommand("spectrum", "Periodogram CSV and log-log slopes");
  p->add_option("--data", sp.data, "CSV path or - for stdin")->required();
  p->add_option("--channel", sp.channel, "channel name (first if omitted)");
  p->add_option("--segments", sp.segments, "1 is a single Hann window, more is a Welch average")->capture_default_str();
  p->add_flag("--no-hann", sp.no_hann, "rectangular window (single segment only)");
  p->add_option("--band", sp.bands, "slope band LO:HI in Hz, repeatable");
  p->add_option("--out", sp.out, "periodogram CSV (stdout if omitted)");
  p->add_option("--report", sp.report, "slope report path (stderr if omitted and the periodogram goes to stdout)");
  p->add_option("--format", sp.format)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (f->parsed()) return cmd_fit(fit);
    if (t->parsed()) return cmd_stream(st);
    if (c->parsed()) return cmd_compare(cmp);
    if (p->parsed()) return cmd_spectrum(sp);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
