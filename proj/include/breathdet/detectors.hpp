#pragma once

// Detection statistics (VMP log odds, estimator-correlator, delay-Doppler
// FFT peak) and empirical CFAR threshold calibration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "breathdet/errors.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"
#include "breathdet/vmp.hpp"

namespace breathdet {

enum class DetectorKind { Vmp, EstimatorCorrelator, Fft };

inline std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Vmp: return "vmp";
    case DetectorKind::EstimatorCorrelator: return "ec";
    case DetectorKind::Fft: return "fft";
  }
  return "unknown";
}

inline DetectorKind parse_detector(std::string_view name) {
  if (name == "vmp") return DetectorKind::Vmp;
  if (name == "ec") return DetectorKind::EstimatorCorrelator;
  if (name == "fft") return DetectorKind::Fft;
  throw ConfigError("unknown detector '" + std::string(name) + "'");
}

struct DetectionResult {
  double statistic = 0.0;
  double threshold = 0.0;
  bool decision = false;  // statistic > threshold; ties decide for the empty car
  DetectorKind kind = DetectorKind::Vmp;
  int iterations = 0;
  bool converged = true;
  bool reliable = true;
};

inline DetectionResult decide(DetectorKind kind, double statistic, double threshold) {
  DetectionResult r;
  r.kind = kind;
  r.statistic = statistic;
  r.threshold = threshold;
  r.decision = statistic > threshold;
  return r;
}

// ---------------------------------------------------------------------------
// VMP

struct VmpDetection {
  double statistic = -std::numeric_limits<double>::infinity();
  bool reliable = false;
  VmpState state;
  NullFit null{0.0, 0.0};
};

/// Runs inference for the occupied model and the closed-form empty model and
/// returns the log-odds statistic. Failed or flagged inference yields -inf.
inline VmpDetection vmp_detect(const StackedSignal& signal, const VmpModel& model, const VmpOptions& opts, Rng& rng) {
  VmpDetection out;
  if (!(signal.energy() > 0.0)) return out;
  const VmpObservation obs = make_observation(signal, model);
  try {
    out.state = run_inference(obs, model, opts, rng);
    out.null = null_model_fit(obs.energy, signal.config.total_size());
  } catch (const NumericalError&) {
    return out;
  }
  if (out.state.flagged) return out;
  out.statistic = log_odds_statistic(out.state, obs, model, out.null, opts.full_shape_prefactor);
  out.reliable = std::isfinite(out.statistic);
  if (!out.reliable) out.statistic = -std::numeric_limits<double>::infinity();
  return out;
}

inline double vmp_statistic(const StackedSignal& signal, const VmpModel& model, const VmpOptions& opts, Rng& rng) {
  return vmp_detect(signal, model, opts, rng).statistic;
}

// ---------------------------------------------------------------------------
// Estimator-correlator (reimplementation with a Kronecker Gaussian signal model)

/// Signal covariance C_s = C_bt (x) C_h0,k held in factored eigen form.
struct EcModel {
  Eigen::MatrixXd breathing_vecs;  // M x M
  Eigen::VectorXd breathing_vals;  // clipped at zero
  std::vector<const ChannelPrior*> channels;

  EcModel(const BreathingPrior& breathing, const std::vector<ChannelPrior>& channel_priors) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(breathing.cov_full);
    if (solver.info() != Eigen::Success) throw NumericalError("EcModel: eigendecomposition failed");
    if (solver.eigenvalues().minCoeff() < -1e-9 * solver.eigenvalues().maxCoeff())
      throw NumericalError("EcModel: breathing covariance is not PSD");
    breathing_vecs = solver.eigenvectors();
    breathing_vals = solver.eigenvalues().cwiseMax(0.0);
    for (const auto& c : channel_priors) channels.push_back(&c);
  }

  explicit EcModel(const VmpModel& model) : EcModel(model.breathing, model.channels) {}
};

/// Sum over antennas of r~_k^H C_s (C_s + sigma^2 I)^-1 r~_k with sigma^2 = 1 / lambda0.
inline double ec_statistic(const StackedSignal& signal, const EcModel& model) {
  const auto& cfg = signal.config;
  if (model.channels.size() != cfg.num_antennas) throw ValidationError("ec_statistic: one channel prior per antenna required");
  if (static_cast<std::size_t>(model.breathing_vals.size()) != cfg.num_reps)
    throw ValidationError("ec_statistic: breathing prior does not match M");
  const double energy = signal.energy();
  if (energy == 0.0) return 0.0;
  const double noise_var = energy / static_cast<double>(cfg.total_size());

  double stat = 0.0;
  const Eigen::MatrixXcd ub = model.breathing_vecs.cast<cdouble>();
  for (std::size_t k = 0; k < cfg.num_antennas; ++k) {
    const ChannelPrior& ch = *model.channels[k];
    if (static_cast<std::size_t>(ch.size()) != cfg.num_freq) throw ValidationError("ec_statistic: channel prior does not match N");
    const Eigen::MatrixXcd y = ch.eigvecs.adjoint() * (signal.antenna_matrix(k) * ub);
    const Eigen::ArrayXXd s = ch.eigvals * model.breathing_vals.transpose();
    stat += (y.array().abs2() * s / (s + noise_var)).sum();
  }
  return stat;
}

// ---------------------------------------------------------------------------
// FFT baseline

/// Slow-time frequency of DFT bin q for M repetitions.
inline double doppler_frequency(std::size_t q, std::size_t num_reps, double rep_interval) {
  const double m = static_cast<double>(num_reps);
  const double idx = (2 * q <= num_reps) ? static_cast<double>(q) : static_cast<double>(q) - m;
  return idx / (m * rep_interval);
}

/// Delay-Doppler map |DFT_m(V R~)|^2 of antenna k; rows are delay bins.
inline Eigen::MatrixXd delay_doppler_map(const StackedSignal& signal, std::size_t k) {
  const auto& cfg = signal.config;
  const auto view = signal.antenna_matrix(k);
  const auto n = static_cast<Eigen::Index>(cfg.num_freq);
  const auto m = static_cast<Eigen::Index>(cfg.num_reps);
  Eigen::FFT<double> fft;
  Eigen::MatrixXcd delay(n, m);
  std::vector<cdouble> in(static_cast<std::size_t>(n)), out;
  const double scale = std::sqrt(static_cast<double>(n));
  for (Eigen::Index c = 0; c < m; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = view(i, c);
    fft.inv(out, in);  // (1/N) sum_n x_n e^{+j 2 pi n k / N}
    for (Eigen::Index i = 0; i < n; ++i) delay(i, c) = out[static_cast<std::size_t>(i)] * scale;
  }
  Eigen::MatrixXd power(n, m);
  std::vector<cdouble> row(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < m; ++c) row[static_cast<std::size_t>(c)] = delay(i, c);
    fft.fwd(out, row);
    for (Eigen::Index c = 0; c < m; ++c) power(i, c) = std::norm(out[static_cast<std::size_t>(c)]);
  }
  return power;
}

/// Peak of the delay-Doppler map, summed over antennas. With a band, only
/// Doppler bins with f_min <= |f| <= f_max (and never DC) are searched.
inline double fft_statistic(const StackedSignal& signal, const std::optional<BreathingBand>& band = std::nullopt) {
  const auto& cfg = signal.config;
  std::vector<bool> allowed(cfg.num_reps, true);
  if (band) {
    for (std::size_t q = 0; q < cfg.num_reps; ++q) {
      const double f = std::abs(doppler_frequency(q, cfg.num_reps, cfg.rep_interval));
      allowed[q] = q != 0 && f >= band->f_min && f <= band->f_max;
    }
  }
  double stat = 0.0;
  for (std::size_t k = 0; k < cfg.num_antennas; ++k) {
    const Eigen::MatrixXd power = delay_doppler_map(signal, k);
    double peak = 0.0;
    for (Eigen::Index c = 0; c < power.cols(); ++c)
      if (allowed[static_cast<std::size_t>(c)]) peak = std::max(peak, power.col(c).maxCoeff());
    stat += peak;
  }
  return stat;
}

// ---------------------------------------------------------------------------
// CFAR calibration

/// Empirical (1 - p_fa) quantile, linear interpolation between order statistics.
inline double empirical_threshold(std::vector<double> h0_statistics, double p_fa) {
  if (!(p_fa > 0.0 && p_fa < 1.0)) throw ConfigError("calibrate_threshold: p_fa must lie in (0, 1)");
  const double n = static_cast<double>(h0_statistics.size());
  if (n * p_fa < 50.0)
    throw ConfigError("calibrate_threshold: need n_trials * p_fa >= 50, got " + std::to_string(n * p_fa));
  std::sort(h0_statistics.begin(), h0_statistics.end());
  const double h = (n - 1.0) * (1.0 - p_fa);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, h0_statistics.size() - 1);
  const double frac = h - static_cast<double>(lo);
  const double a = h0_statistics[lo];
  const double b = h0_statistics[hi];
  if (a == b || frac == 0.0) return a;
  return a + frac * (b - a);
}

/// Draws n_trials empty-car statistics and returns the CFAR threshold.
inline double calibrate_threshold(const std::function<double(const StackedSignal&, Rng&)>& detector,
                                  const std::function<StackedSignal(Rng&)>& h0_sampler, double p_fa,
                                  std::size_t n_trials, Rng& rng) {
  if (!(p_fa > 0.0 && p_fa < 1.0)) throw ConfigError("calibrate_threshold: p_fa must lie in (0, 1)");
  if (static_cast<double>(n_trials) * p_fa < 50.0) throw ConfigError("calibrate_threshold: insufficient trials");
  std::vector<double> stats;
  stats.reserve(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    const StackedSignal s = h0_sampler(rng);
    stats.push_back(detector(s, rng));
  }
  return empirical_threshold(std::move(stats), p_fa);
}

struct ThresholdEntry {
  DetectorKind detector;
  double snr_db;
  double gamma;
};

struct ThresholdTable {
  std::vector<ThresholdEntry> entries;
  double target_pfa = 0.01;
  std::size_t trials = 0;

  void validate() const {
    if (!(target_pfa > 0.0 && target_pfa < 1.0)) throw ConfigError("ThresholdTable: p_fa must lie in (0, 1)");
    if (static_cast<double>(trials) * target_pfa < 50.0) throw ConfigError("ThresholdTable: too few calibration trials");
  }

  std::optional<double> lookup(DetectorKind kind, double snr_db) const {
    for (const auto& e : entries)
      if (e.detector == kind && std::abs(e.snr_db - snr_db) < 1e-9) return e.gamma;
    return std::nullopt;
  }
};

}  // namespace breathdet
