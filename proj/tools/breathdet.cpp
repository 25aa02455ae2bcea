// Command-line front end: simulate, infer, detect, calibrate, sweep, ingest-info.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "breathdet.hpp"

namespace bd = breathdet;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string prior = "gamma";
  std::string detector = "all";
  std::size_t antennas = 1;
  std::string band;
  bool fft_band = false;
  unsigned workers = 1;
  std::string out;
};

bd::BreathingBand parse_band(const std::string& text) {
  bd::BreathingBand band;
  if (text.empty()) return band;
  const auto cells = bd::detail::split_csv_line(text);
  try {
    if (cells.size() != 2) throw std::invalid_argument("");
    band.f_min = std::stod(cells[0]);
    band.f_max = std::stod(cells[1]);
  } catch (const std::logic_error&) {
    throw bd::ConfigError("--band expects fmin,fmax in Hz");
  }
  return band;
}

std::vector<bd::DetectorKind> parse_detectors(const std::string& name) {
  if (name == "all") return {bd::DetectorKind::Vmp, bd::DetectorKind::EstimatorCorrelator, bd::DetectorKind::Fft};
  return {bd::parse_detector(name)};
}

bd::Scenario::Params scenario_params(const Common& c, const bd::RadarConfig& config) {
  bd::Scenario::Params p;
  p.config = config;
  p.band = parse_band(c.band);
  p.band.validate(config.rep_interval);
  return p;
}

bd::RadarConfig default_config(const Common& c) {
  bd::RadarConfig config;
  config.num_antennas = c.antennas;
  config.validate();
  return config;
}

std::optional<bd::BreathingBand> fft_band(const Common& c) {
  if (!c.fft_band) return std::nullopt;
  return parse_band(c.band);
}

void add_common(CLI::App* app, Common& c, bool with_detector) {
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--prior", c.prior, "channel prior")->check(CLI::IsMember({"known-delay", "gamma"}));
  if (with_detector)
    app->add_option("--detector", c.detector, "detector")->check(CLI::IsMember({"vmp", "ec", "fft", "all"}));
  app->add_option("--band", c.band, "breathing band fmin,fmax in Hz");
  app->add_flag("--fft-band", c.fft_band, "restrict the FFT peak search to the breathing band");
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file = bd::detail::open_out(path);
  return file;
}

void finish(std::ofstream& file, const std::string& path) {
  if (!file.is_open()) return;
  file.flush();
  if (!file) throw bd::DataError("write to '" + path + "' failed");
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  double snr_db = -10.0;
  bool empty = false;
  std::size_t windows = 1;
  std::string note = "simulated";
};

int run_simulate(const Common& c, const SimulateArgs& a) {
  if (c.out.empty()) throw bd::ConfigError("simulate: --out is required");
  if (a.windows < 1) throw bd::ConfigError("simulate: --windows must be at least 1");
  const bd::Scenario scenario(scenario_params(c, default_config(c)));
  const auto& cfg = scenario.config();
  std::vector<bd::cdouble> samples;
  samples.reserve(a.windows * cfg.total_size());
  for (std::size_t w = 0; w < a.windows; ++w) {
    bd::Rng rng = bd::make_rng(c.seed, {w});
    const auto meas = a.empty ? scenario.empty(a.snr_db, rng) : scenario.occupied(a.snr_db, rng);
    samples.insert(samples.end(), meas.frames.raw().begin(), meas.frames.raw().end());
  }
  bd::MeasurementRecord rec;
  rec.header.num_antennas = cfg.num_antennas;
  rec.header.num_freq = cfg.num_freq;
  rec.header.total_reps = a.windows * cfg.num_reps;
  rec.header.freq_spacing = cfg.freq_spacing;
  rec.header.carrier = cfg.carrier;
  rec.header.rep_interval = cfg.rep_interval;
  rec.header.device_note = a.note;
  rec.header.occupied = !a.empty;
  rec.samples = std::move(samples);
  bd::write_measurement(c.out, rec);
  std::cout << "wrote " << c.out << ": K=" << cfg.num_antennas << " N=" << cfg.num_freq << " M_total="
            << rec.header.total_reps << " occupied=" << (a.empty ? "false" : "true") << '\n';
  return 0;
}

// --- shared file handling -------------------------------------------------

struct FileArgs {
  std::string input;
  double window_seconds = 10.0;
  std::optional<double> inject_snr_db;
};

/// Adds complex white noise with variance equal to the mean clutter-free
/// power of the window times 10^(-snr/10).
bd::FrameSet inject_noise(const bd::FrameSet& frames, double snr_db, bd::Rng& rng) {
  const bd::StackedSignal s = bd::remove_clutter(frames);
  const double power = s.energy() / static_cast<double>(s.config.total_size());
  const double var = power * std::pow(10.0, -snr_db / 10.0);
  std::vector<bd::cdouble> data(frames.raw().begin(), frames.raw().end());
  const Eigen::VectorXcd w = bd::standard_complex_normal(static_cast<Eigen::Index>(data.size()), rng);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += std::sqrt(var) * w(static_cast<Eigen::Index>(i));
  return bd::FrameSet(frames.config(), std::move(data));
}

std::vector<bd::FrameSet> load_windows(const Common& c, const FileArgs& f) {
  if (f.input.empty()) throw bd::ConfigError("--in is required");
  const auto rec = bd::read_measurement(f.input);
  auto windows = bd::ingest(rec, f.window_seconds);
  if (windows.empty()) throw bd::DataError(f.input + ": file holds no complete window");
  if (f.inject_snr_db)
    for (std::size_t w = 0; w < windows.size(); ++w) {
      bd::Rng rng = bd::make_rng(c.seed, {0x6e6f697365ull, w});
      windows[w] = inject_noise(windows[w], *f.inject_snr_db, rng);
    }
  return windows;
}

// --- infer ----------------------------------------------------------------

struct InferArgs {
  std::size_t window = 0;
  std::string elbo_out;
  int restarts = 1;
};

int run_infer(const Common& c, const FileArgs& f, const InferArgs& a) {
  const auto windows = load_windows(c, f);
  if (a.window >= windows.size()) throw bd::ConfigError("infer: window index out of range");
  const auto& frames = windows[a.window];
  const bd::Scenario scenario(scenario_params(c, frames.config()));
  const auto model = bd::DetectorSuite::make_model(scenario, bd::parse_prior(c.prior));
  bd::VmpOptions opts;
  opts.n_restarts = a.restarts;
  bd::Rng rng = bd::make_rng(c.seed, {a.window});
  const auto signal = bd::remove_clutter(frames);
  const auto state = bd::run_inference(signal, model, opts, rng);

  std::ofstream file;
  bd::write_breathing_csv(output(c.out, file), state.breathing_trace(model), frames.config().rep_interval);
  finish(file, c.out);
  if (!a.elbo_out.empty()) {
    auto os = bd::detail::open_out(a.elbo_out);
    bd::write_elbo_trace_csv(os, state);
    finish(os, a.elbo_out);
  }
  std::cerr << "iterations=" << state.iterations << " converged=" << (state.converged ? "true" : "false")
            << " elbo=" << bd::detail::fmt12(state.elbo()) << " lambda=" << bd::detail::fmt12(state.lambda_hat) << '\n';
  if (state.flagged) throw bd::NumericalError("infer: a numerical guard fired during inference");
  return 0;
}

// --- detect ---------------------------------------------------------------

struct DetectArgs {
  std::optional<double> threshold;
  std::string thresholds_path;
  std::optional<double> snr_db;
};

int run_detect(const Common& c, const FileArgs& f, const DetectArgs& a) {
  const auto windows = load_windows(c, f);
  const auto detectors = parse_detectors(c.detector);
  if (a.threshold && detectors.size() != 1) throw bd::ConfigError("detect: --threshold needs a single --detector");
  std::optional<bd::ThresholdTable> table;
  if (!a.thresholds_path.empty()) {
    if (!a.snr_db) throw bd::ConfigError("detect: --thresholds needs --snr to select the row");
    auto is = bd::detail::open_in(a.thresholds_path);
    table = bd::read_thresholds(is);
  }
  const bd::Scenario scenario(scenario_params(c, windows.front().config()));
  const bd::DetectorSuite suite(scenario, bd::parse_prior(c.prior), {}, fft_band(c));

  std::ofstream file;
  std::ostream& os = output(c.out, file);
  os << "window,detector,statistic,threshold,decision\n";
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto signal = bd::remove_clutter(windows[w]);
    for (std::size_t d = 0; d < detectors.size(); ++d) {
      bd::Rng rng = bd::make_rng(c.seed, {w, d});
      const auto r = suite.evaluate(detectors[d], signal, rng);
      std::optional<double> gamma = a.threshold;
      if (table) {
        gamma = table->lookup(detectors[d], *a.snr_db);
        if (!gamma) throw bd::ConfigError("detect: no threshold for " + std::string(bd::to_string(detectors[d])));
      }
      os << w << ',' << bd::to_string(detectors[d]) << ',' << bd::detail::fmt12(r.statistic) << ',';
      if (gamma)
        os << bd::detail::fmt12(*gamma) << ',' << (r.statistic > *gamma ? "occupied" : "empty");
      else
        os << ",";
      os << '\n';
      if (!r.reliable) std::cerr << "window " << w << ": inference flagged as unreliable\n";
    }
  }
  finish(file, c.out);
  return 0;
}

// --- calibrate / sweep ----------------------------------------------------

struct SweepArgs {
  double snr_min = -30.0;
  double snr_max = -10.0;
  double snr_step = 2.0;
  double p_fa = 0.01;
  std::size_t trials = 2000;
  std::size_t calibration_trials = 5000;
  std::string thresholds_path;
};

bd::SweepConfig sweep_config(const Common& c, const SweepArgs& a) {
  bd::SweepConfig cfg;
  cfg.snr_grid = bd::SweepConfig::grid(a.snr_min, a.snr_max, a.snr_step);
  cfg.trials_per_point = a.trials;
  cfg.calibration_trials = a.calibration_trials;
  cfg.p_fa = a.p_fa;
  cfg.detectors = parse_detectors(c.detector);
  cfg.prior = bd::parse_prior(c.prior);
  cfg.scenario = scenario_params(c, default_config(c));
  cfg.master_seed = c.seed;
  cfg.workers = c.workers;
  cfg.fft_band = fft_band(c);
  if (!a.thresholds_path.empty()) {
    auto is = bd::detail::open_in(a.thresholds_path);
    cfg.thresholds = bd::read_thresholds(is);
  }
  return cfg;
}

int run_calibrate(const Common& c, const SweepArgs& a) {
  const auto table = bd::run_calibration(sweep_config(c, a));
  std::ofstream file;
  bd::write_thresholds(output(c.out, file), table);
  finish(file, c.out);
  return 0;
}

int run_sweep_cmd(const Common& c, const SweepArgs& a) {
  const auto curve = bd::run_sweep(sweep_config(c, a));
  std::ofstream file;
  bd::write_results(output(c.out, file), curve);
  finish(file, c.out);
  return 0;
}

// --- ingest-info ----------------------------------------------------------

int run_ingest_info(const FileArgs& f) {
  if (f.input.empty()) throw bd::ConfigError("--in is required");
  const auto rec = bd::read_measurement(f.input);
  const auto& h = rec.header;
  const auto windows = bd::ingest(rec, f.window_seconds);
  const std::size_t m = bd::window_length(h.rep_interval, f.window_seconds);
  std::cout << "schema_version: " << h.schema_version << '\n'
            << "antennas (K): " << h.num_antennas << '\n'
            << "frequency bins (N): " << h.num_freq << '\n'
            << "repetitions (M_total): " << h.total_reps << '\n'
            << "delta_f: " << bd::detail::fmt12(h.freq_spacing) << " Hz\n"
            << "f_c: " << bd::detail::fmt12(h.carrier) << " Hz\n"
            << "T_rep: " << bd::detail::fmt12(h.rep_interval) << " s\n"
            << "device_note: " << h.device_note << '\n'
            << "label: " << (h.occupied ? (*h.occupied ? "occupied" : "empty") : "unknown") << '\n'
            << "windows: " << windows.size() << " x " << m << " repetitions, " << (h.total_reps - windows.size() * m)
            << " discarded\n";
  for (std::size_t w = 0; w < windows.size(); ++w)
    std::cout << "window " << w << ": clutter-free energy " << bd::detail::fmt12(bd::remove_clutter(windows[w]).energy())
              << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Breathing-presence detection from UWB radar frames"};
  app.require_subcommand(1);
  Common common;
  FileArgs file_args;
  SimulateArgs sim;
  InferArgs inf;
  DetectArgs det;
  SweepArgs sweep;

  auto* simulate = app.add_subcommand("simulate", "write a simulated measurement file");
  add_common(simulate, common, false);
  simulate->add_option("--antennas", common.antennas, "number of receive antennas");
  simulate->add_option("--snr", sim.snr_db, "SNR in dB");
  simulate->add_flag("--empty", sim.empty, "noise only (empty car)");
  simulate->add_option("--windows", sim.windows, "number of 10 s windows");
  simulate->add_option("--note", sim.note, "device note stored in the header");
  simulate->add_option("--out", common.out, "output file")->required();

  auto add_file = [&](CLI::App* sub) {
    sub->add_option("--in", file_args.input, "measurement file")->required();
    sub->add_option("--window-seconds", file_args.window_seconds, "window length in seconds");
  };
  auto add_inject = [&](CLI::App* sub) {
    sub->add_option("--inject-noise", file_args.inject_snr_db, "add white noise at this level (dB below window power)");
  };

  auto* infer = app.add_subcommand("infer", "run VMP on one window, emit breathing and ELBO traces");
  add_common(infer, common, false);
  add_file(infer);
  add_inject(infer);
  infer->add_option("--window", inf.window, "window index");
  infer->add_option("--restarts", inf.restarts, "random restarts");
  infer->add_option("--out", common.out, "breathing trace CSV (default stdout)");
  infer->add_option("--elbo-out", inf.elbo_out, "ELBO trace CSV");

  auto* detect = app.add_subcommand("detect", "per-window detection statistics and decisions");
  add_common(detect, common, true);
  add_file(detect);
  add_inject(detect);
  detect->add_option("--threshold", det.threshold, "decision threshold");
  detect->add_option("--thresholds", det.thresholds_path, "threshold table CSV");
  detect->add_option("--snr", det.snr_db, "SNR row of the threshold table");
  detect->add_option("--out", common.out, "output CSV (default stdout)");

  auto add_sweep = [&](CLI::App* sub) {
    add_common(sub, common, true);
    sub->add_option("--antennas", common.antennas, "number of receive antennas");
    sub->add_option("--pfa", sweep.p_fa, "false-alarm probability");
    sub->add_option("--trials", sweep.trials, "occupied trials per SNR point");
    sub->add_option("--calibration-trials", sweep.calibration_trials, "empty trials per SNR point");
    sub->add_option("--snr-min", sweep.snr_min, "lowest SNR in dB");
    sub->add_option("--snr-max", sweep.snr_max, "highest SNR in dB");
    sub->add_option("--snr-step", sweep.snr_step, "SNR step in dB");
    sub->add_option("--workers", common.workers, "worker threads");
    sub->add_option("--out", common.out, "output CSV (default stdout)");
  };
  auto* calibrate = app.add_subcommand("calibrate", "emit a CFAR threshold table");
  add_sweep(calibrate);
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo detection curve");
  add_sweep(sweep_cmd);
  sweep_cmd->add_option("--thresholds", sweep.thresholds_path, "reuse a threshold table");

  auto* info = app.add_subcommand("ingest-info", "validate and summarize a measurement file");
  add_file(info);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return run_simulate(common, sim);
    if (*infer) return run_infer(common, file_args, inf);
    if (*detect) return run_detect(common, file_args, det);
    if (*calibrate) return run_calibrate(common, sweep);
    if (*sweep_cmd) return run_sweep_cmd(common, sweep);
    if (*info) return run_ingest_info(file_args);
  } catch (const bd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
