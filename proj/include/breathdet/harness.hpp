#pragma once

// Monte Carlo detection sweeps: CFAR calibration per SNR point followed by
// occupied-car trials, with Wilson intervals on the detection probability.
// Every trial draws from its own stream seeded by (master_seed, snr index,
// hypothesis, trial index), so results do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "breathdet/detectors.hpp"
#include "breathdet/errors.hpp"
#include "breathdet/io.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"
#include "breathdet/simulator.hpp"
#include "breathdet/vmp.hpp"

namespace breathdet {

enum class PriorChoice { KnownDelay, Gamma };

inline std::string_view to_string(PriorChoice p) { return p == PriorChoice::KnownDelay ? "known-delay" : "gamma"; }

inline PriorChoice parse_prior(std::string_view name) {
  if (name == "known-delay") return PriorChoice::KnownDelay;
  if (name == "gamma") return PriorChoice::Gamma;
  throw ConfigError("unknown prior '" + std::string(name) + "'");
}

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval for a binomial proportion (95% by default).
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, std::min(p, centre - half)), std::min(1.0, std::max(p, centre + half))};
}

/// Runs body(i) for i in [0, n) on `workers` threads. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Priors and precomputed factorizations for all detectors on one setup.
class DetectorSuite {
public:
  DetectorSuite(const Scenario& scenario, PriorChoice prior, VmpOptions vmp = {},
                std::optional<BreathingBand> fft_band = std::nullopt)
      : vmp_opts_(vmp), fft_band_(fft_band), vmp_model_(make_model(scenario, prior)), ec_model_(vmp_model_) {}

  DetectorSuite(VmpModel model, VmpOptions vmp = {}, std::optional<BreathingBand> fft_band = std::nullopt)
      : vmp_opts_(vmp), fft_band_(fft_band), vmp_model_(std::move(model)), ec_model_(vmp_model_) {}

  DetectorSuite(const DetectorSuite&) = delete;
  DetectorSuite& operator=(const DetectorSuite&) = delete;

  static VmpModel make_model(const Scenario& scenario, PriorChoice prior) {
    const auto& cfg = scenario.config();
    const auto& p = scenario.params();
    const double tau0 = scenario.target().delay;
    const ChannelPrior ch = prior == PriorChoice::KnownDelay
                                ? channel_prior_known_delay(tau0, p.tau_f, p.k_los, cfg, scenario.pulse())
                                : channel_prior_gamma(tau0, p.tau_f, cfg, scenario.pulse());
    return VmpModel::replicated(scenario.breathing_prior(), ch, cfg.num_antennas);
  }

  const VmpModel& vmp_model() const { return vmp_model_; }
  const EcModel& ec_model() const { return ec_model_; }
  const VmpOptions& vmp_options() const { return vmp_opts_; }

  /// Statistic of one detector; `reliable` is cleared when inference failed.
  DetectionResult evaluate(DetectorKind kind, const StackedSignal& signal, Rng& rng) const {
    DetectionResult r;
    r.kind = kind;
    switch (kind) {
      case DetectorKind::Vmp: {
        const auto d = vmp_detect(signal, vmp_model_, vmp_opts_, rng);
        r.statistic = d.statistic;
        r.reliable = d.reliable;
        r.iterations = d.state.iterations;
        r.converged = d.state.converged;
        break;
      }
      case DetectorKind::EstimatorCorrelator: r.statistic = ec_statistic(signal, ec_model_); break;
      case DetectorKind::Fft: r.statistic = fft_statistic(signal, fft_band_); break;
    }
    return r;
  }

private:
  VmpOptions vmp_opts_;
  std::optional<BreathingBand> fft_band_;
  VmpModel vmp_model_;
  EcModel ec_model_;
};

struct SweepConfig {
  std::vector<double> snr_grid;
  std::size_t trials_per_point = 2000;
  std::size_t calibration_trials = 5000;
  double p_fa = 0.01;
  std::vector<DetectorKind> detectors{DetectorKind::Vmp, DetectorKind::EstimatorCorrelator, DetectorKind::Fft};
  PriorChoice prior = PriorChoice::Gamma;
  Scenario::Params scenario;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  VmpOptions vmp;
  std::optional<BreathingBand> fft_band;
  std::optional<ThresholdTable> thresholds;  // reuse instead of calibrating

  static std::vector<double> grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw ConfigError("SNR grid: need step > 0 and max >= min");
    std::vector<double> g;
    for (std::size_t i = 0;; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      if (v > hi + 1e-9 * step) break;
      g.push_back(v);
    }
    return g;
  }

  void validate() const {
    if (snr_grid.empty()) throw ConfigError("SweepConfig: SNR grid is empty");
    if (trials_per_point < 100) throw ConfigError("SweepConfig: need at least 100 trials per point");
    if (!(p_fa > 0.0 && p_fa < 1.0)) throw ConfigError("SweepConfig: p_fa must lie in (0, 1)");
    if (detectors.empty()) throw ConfigError("SweepConfig: no detectors selected");
    if (!thresholds && static_cast<double>(calibration_trials) * p_fa < 50.0)
      throw ConfigError("SweepConfig: need calibration_trials * p_fa >= 50");
    scenario.config.validate();
  }
};

struct CurvePoint {
  DetectorKind detector;
  double snr_db;
  double pd;
  double ci_lo;
  double ci_hi;
  std::size_t n_trials;
  std::size_t n_flagged;
  double gamma = 0.0;
};

struct DetectionCurve {
  std::vector<CurvePoint> points;

  std::optional<CurvePoint> find(DetectorKind kind, double snr_db) const {
    for (const auto& p : points)
      if (p.detector == kind && std::abs(p.snr_db - snr_db) < 1e-9) return p;
    return std::nullopt;
  }
};

namespace detail {

struct TrialOutcome {
  std::vector<double> stats;
  std::vector<bool> flagged;
};

enum Hypothesis : std::uint64_t { kEmpty = 0, kOccupied = 1 };

inline TrialOutcome run_trial(const Scenario& scenario, const DetectorSuite& suite, const std::vector<DetectorKind>& dets,
                              double snr_db, std::uint64_t seed, std::uint64_t snr_index, Hypothesis hyp,
                              std::uint64_t trial) {
  TrialOutcome out{std::vector<double>(dets.size(), -std::numeric_limits<double>::infinity()),
                   std::vector<bool>(dets.size(), false)};
  Rng rng = make_rng(seed, {snr_index, static_cast<std::uint64_t>(hyp), trial});
  std::optional<StackedSignal> signal;
  try {
    const Measurement meas = hyp == kOccupied ? scenario.occupied(snr_db, rng) : scenario.empty(snr_db, rng);
    signal = remove_clutter(meas.frames);
  } catch (const Error&) {
    std::fill(out.flagged.begin(), out.flagged.end(), true);
    return out;
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    // each detector gets an independent stream so adding one does not perturb another
    Rng det_rng = make_rng(seed, {snr_index, static_cast<std::uint64_t>(hyp), trial, 1000 + d});
    try {
      const auto r = suite.evaluate(dets[d], *signal, det_rng);
      out.stats[d] = r.statistic;
      out.flagged[d] = !r.reliable;
    } catch (const Error&) {
      out.flagged[d] = true;
    }
  }
  return out;
}

inline std::vector<TrialOutcome> run_trials(const Scenario& scenario, const DetectorSuite& suite,
                                            const SweepConfig& cfg, double snr_db, std::uint64_t snr_index,
                                            Hypothesis hyp, std::size_t n) {
  std::vector<TrialOutcome> out(n);
  parallel_for(n, cfg.workers, [&](std::size_t t) {
    out[t] = run_trial(scenario, suite, cfg.detectors, snr_db, cfg.master_seed, snr_index, hyp, t);
  });
  return out;
}

inline std::vector<double> calibrate_point(const Scenario& scenario, const DetectorSuite& suite, const SweepConfig& cfg,
                                           double snr_db, std::uint64_t snr_index) {
  const auto h0 = run_trials(scenario, suite, cfg, snr_db, snr_index, kEmpty, cfg.calibration_trials);
  std::vector<double> gammas;
  for (std::size_t d = 0; d < cfg.detectors.size(); ++d) {
    std::vector<double> stats;
    stats.reserve(h0.size());
    for (const auto& t : h0) stats.push_back(t.stats[d]);  // failed inference counts as -inf
    gammas.push_back(empirical_threshold(std::move(stats), cfg.p_fa));
  }
  return gammas;
}

}  // namespace detail

/// CFAR thresholds for every (detector, SNR) of the sweep.
inline ThresholdTable run_calibration(const SweepConfig& cfg) {
  cfg.validate();
  const Scenario scenario(cfg.scenario);
  const DetectorSuite suite(scenario, cfg.prior, cfg.vmp, cfg.fft_band);
  ThresholdTable table;
  table.target_pfa = cfg.p_fa;
  table.trials = cfg.calibration_trials;
  for (std::size_t i = 0; i < cfg.snr_grid.size(); ++i) {
    const auto gammas = detail::calibrate_point(scenario, suite, cfg, cfg.snr_grid[i], i);
    for (std::size_t d = 0; d < cfg.detectors.size(); ++d) table.entries.push_back({cfg.detectors[d], cfg.snr_grid[i], gammas[d]});
  }
  return table;
}

/// Full Monte Carlo sweep. A detector whose failure rate at a point reaches 1%
/// aborts the sweep; below that, failed trials leave the Pd denominator.
inline DetectionCurve run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const Scenario scenario(cfg.scenario);
  const DetectorSuite suite(scenario, cfg.prior, cfg.vmp, cfg.fft_band);
  DetectionCurve curve;
  for (std::size_t i = 0; i < cfg.snr_grid.size(); ++i) {
    const double snr = cfg.snr_grid[i];
    std::vector<double> gammas;
    if (cfg.thresholds) {
      for (auto d : cfg.detectors) {
        const auto g = cfg.thresholds->lookup(d, snr);
        if (!g) throw ConfigError("threshold table has no entry for " + std::string(to_string(d)) + " at " +
                                  detail::fmt12(snr) + " dB");
        gammas.push_back(*g);
      }
    } else {
      gammas = detail::calibrate_point(scenario, suite, cfg, snr, i);
    }
    const auto h1 = detail::run_trials(scenario, suite, cfg, snr, i, detail::kOccupied, cfg.trials_per_point);
    for (std::size_t d = 0; d < cfg.detectors.size(); ++d) {
      std::size_t flagged = 0, hits = 0;
      for (const auto& t : h1) {
        if (t.flagged[d]) {
          ++flagged;
          continue;
        }
        if (t.stats[d] > gammas[d]) ++hits;
      }
      if (static_cast<double>(flagged) >= 0.01 * static_cast<double>(h1.size()))
        throw NumericalError("sweep aborted: " + std::to_string(flagged) + " failed " + std::string(to_string(cfg.detectors[d])) +
                             " trials at " + detail::fmt12(snr) + " dB");
      const std::size_t n = h1.size() - flagged;
      const auto ci = wilson_interval(hits, n);
      curve.points.push_back({cfg.detectors[d], snr, n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0,
                              ci.lo, ci.hi, n, flagged, gammas[d]});
    }
  }
  std::stable_sort(curve.points.begin(), curve.points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    if (a.detector != b.detector) return static_cast<int>(a.detector) < static_cast<int>(b.detector);
    return a.snr_db < b.snr_db;
  });
  return curve;
}

// ---------------------------------------------------------------------------
// Results CSV

inline void write_results(std::ostream& os, const DetectionCurve& curve) {
  os << "detector,snr_db,pd,ci_lo,ci_hi,n_trials,n_flagged\n";
  for (const auto& p : curve.points)
    os << to_string(p.detector) << ',' << detail::fmt12(p.snr_db) << ',' << detail::fmt12(p.pd) << ','
       << detail::fmt12(p.ci_lo) << ',' << detail::fmt12(p.ci_hi) << ',' << p.n_trials << ',' << p.n_flagged << '\n';
}

inline void export_results(const DetectionCurve& curve, const std::string& path) {
  auto os = detail::open_out(path);
  write_results(os, curve);
  os.flush();
  if (!os) throw DataError("export_results: write to '" + path + "' failed");
}

inline DetectionCurve read_results(std::istream& is) {
  DetectionCurve curve;
  std::string line;
  if (!std::getline(is, line) || line != "detector,snr_db,pd,ci_lo,ci_hi,n_trials,n_flagged")
    throw ParseError("results: unexpected header", 0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 7) throw ParseError("results: expected 7 columns on line " + std::to_string(lineno), 0);
    try {
      curve.points.push_back({parse_detector(c[0]), std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4]),
                              static_cast<std::size_t>(std::stoull(c[5])), static_cast<std::size_t>(std::stoull(c[6]))});
    } catch (const std::logic_error&) {
      throw ParseError("results: bad number on line " + std::to_string(lineno), 0);
    }
  }
  return curve;
}

}  // namespace breathdet
