#pragma once

// Synthetic multistatic frames from the backscatter channel with a point
// target whose delay follows the breathing motion (first-order model by
// default, exact phase rotation optionally).

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breathdet/errors.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"

namespace breathdet {

struct TargetParams {
  std::vector<cdouble> reflection;  // alpha_k
  std::vector<double> geometry;     // rho_k
  double delay = 1.0 / 299792458.0;  // tau0, s

  static TargetParams monostatic_default(std::size_t num_antennas, double propagation_speed = 299792458.0) {
    return {std::vector<cdouble>(num_antennas, cdouble{1.0, 0.0}), std::vector<double>(num_antennas, 2.0),
            1.0 / propagation_speed};
  }

  void validate(std::size_t num_antennas) const {
    if (reflection.size() != num_antennas || geometry.size() != num_antennas)
      throw ConfigError("TargetParams: need one reflection and geometry coefficient per antenna");
    for (double rho : geometry)
      if (!(rho > 0.0 && rho <= 2.0)) throw ConfigError("TargetParams: geometry coefficient must lie in (0, 2]");
    for (const auto& a : reflection)
      if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
        throw ConfigError("TargetParams: reflection coefficient must be finite");
    if (!(delay > 0.0)) throw ConfigError("TargetParams: delay must be positive");
  }
};

struct GroundTruth {
  Eigen::VectorXd breathing;                    // b_t, metres, length M
  std::vector<Eigen::VectorXcd> channels;       // h_{s,k}, length N each
  std::vector<Eigen::VectorXcd> forward_backward;  // h_{fb,k}; empty if not drawn by the simulator
  double noise_precision = 1.0;                 // lambda

  double breathing_energy() const { return breathing.squaredNorm(); }
  double channel_energy() const {
    double e = 0.0;
    for (const auto& h : channels) e += h.squaredNorm();
    return e;
  }
};

/// Draws b_t = amplitude_rms * U b with b ~ N(0, C_b). C_bt has unit
/// diagonal, so amplitude_rms is the per-sample standard deviation.
inline Eigen::VectorXd sample_breathing(const BreathingPrior& prior, double amplitude_rms, Rng& rng) {
  const Eigen::VectorXd z = standard_normal(prior.rank(), rng);
  const Eigen::VectorXd b = prior.eigenvalues.cwiseSqrt().cwiseProduct(z);
  return amplitude_rms * (prior.basis * b);
}

/// Square-root factor F of a PSD covariance (F F^H = C), negative eigenvalues clipped.
inline Eigen::MatrixXcd covariance_factor(const Eigen::MatrixXcd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(0.5 * (cov + cov.adjoint()));
  if (solver.info() != Eigen::Success) throw NumericalError("covariance_factor: eigendecomposition failed");
  const Eigen::VectorXd d = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * d.asDiagonal();
}

/// Deterministic per-bin factor (f + f_c) .* s applied to h_fb.
inline Eigen::VectorXcd spectral_factor(const RadarConfig& config, const Eigen::VectorXcd& pulse) {
  const auto n = static_cast<Eigen::Index>(config.num_freq);
  Eigen::VectorXcd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = pulse(i) * (config.frequency(static_cast<std::size_t>(i)) + config.carrier);
  return out;
}

/// -j 2 pi rho_k alpha_k / c
inline cdouble channel_gain(const TargetParams& target, std::size_t k, double propagation_speed) {
  return cdouble{0.0, -2.0 * std::numbers::pi * target.geometry[k] / propagation_speed} * target.reflection[k];
}

struct ChannelDraw {
  std::vector<Eigen::VectorXcd> effective;         // h_{s,k}
  std::vector<Eigen::VectorXcd> forward_backward;  // h_{fb,k}
};

/// Independent h_f, h_b ~ CN(0, C_hf) per antenna given a factor of C_hf;
/// h_s = gain * h_f .* h_b .* (f + f_c) .* s.
inline ChannelDraw sample_channels_factored(const Eigen::MatrixXcd& hf_factor, const TargetParams& target,
                                            const Eigen::VectorXcd& pulse, const RadarConfig& config, Rng& rng) {
  target.validate(config.num_antennas);
  const auto n = static_cast<Eigen::Index>(config.num_freq);
  if (hf_factor.rows() != n || pulse.size() != n) throw ValidationError("sample_channels: dimension mismatch");
  const Eigen::VectorXcd weight = spectral_factor(config, pulse);
  ChannelDraw out;
  for (std::size_t k = 0; k < config.num_antennas; ++k) {
    const Eigen::VectorXcd hf = hf_factor * standard_complex_normal(hf_factor.cols(), rng);
    const Eigen::VectorXcd hb = hf_factor * standard_complex_normal(hf_factor.cols(), rng);
    Eigen::VectorXcd hfb = hf.cwiseProduct(hb);
    out.effective.push_back(channel_gain(target, k, config.propagation_speed) * hfb.cwiseProduct(weight));
    out.forward_backward.push_back(std::move(hfb));
  }
  return out;
}

inline ChannelDraw sample_channels(const Eigen::MatrixXcd& cov_hf, const TargetParams& target,
                                   const Eigen::VectorXcd& pulse, const RadarConfig& config, Rng& rng) {
  return sample_channels_factored(covariance_factor(cov_hf), target, pulse, config, rng);
}

struct SynthesisOptions {
  Eigen::VectorXcd static_clutter;  // length K*N (per (k, n) slot) or empty
  bool exact_phase = false;         // exp(-j 2 pi (f + f_c) rho b / c) instead of its linearization
};

struct Measurement {
  FrameSet frames;
  double noise_precision;
};

namespace detail {

inline void add_noise_and_clutter(FrameSet& frames, double noise_precision, Rng& rng, const SynthesisOptions& opts) {
  const auto& cfg = frames.config();
  const std::size_t slot = cfg.num_antennas * cfg.num_freq;
  if (opts.static_clutter.size() != 0 && static_cast<std::size_t>(opts.static_clutter.size()) != slot)
    throw ValidationError("synthesize_measurement: static clutter must have K*N entries");
  std::normal_distribution<double> dist(0.0, std::sqrt(0.5 / noise_precision));
  auto raw = frames.raw();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double re = dist(rng);
    const double im = dist(rng);
    raw[i] += cdouble{re, im};
    if (opts.static_clutter.size() != 0) raw[i] += opts.static_clutter(static_cast<Eigen::Index>(i % slot));
  }
}

}  // namespace detail

/// SNR = lambda ||b||^2 ||h_s||^2 / (N M), solved for lambda.
inline double noise_precision_for_snr(double snr_db, double breathing_energy, double channel_energy,
                                      const RadarConfig& config) {
  const double snr = std::pow(10.0, snr_db / 10.0);
  const double nm = static_cast<double>(config.num_freq * config.num_reps);
  return snr * nm / (breathing_energy * channel_energy);
}

/// Occupied-car frames r_{k,m} = b_t(m) h_{s,k} + w_{k,m} (+ clutter) at the requested SNR.
/// In exact-phase mode `target` and `pulse` must be supplied and truth.forward_backward filled.
inline Measurement synthesize_measurement(const GroundTruth& truth, double snr_db, Rng& rng, const RadarConfig& config,
                                          const SynthesisOptions& opts = {}, const TargetParams* target = nullptr,
                                          const Eigen::VectorXcd* pulse = nullptr) {
  config.validate();
  if (static_cast<std::size_t>(truth.breathing.size()) != config.num_reps ||
      truth.channels.size() != config.num_antennas)
    throw ValidationError("synthesize_measurement: ground truth does not match the radar configuration");
  const double eb = truth.breathing_energy();
  const double eh = truth.channel_energy();
  if (!(eb > 0.0) || !(eh > 0.0))
    throw ConfigError("synthesize_measurement: occupied hypothesis needs non-zero breathing and channel energy");
  const double lambda = noise_precision_for_snr(snr_db, eb, eh, config);

  FrameSet frames(config);
  if (!opts.exact_phase) {
    for (std::size_t m = 0; m < config.num_reps; ++m)
      for (std::size_t k = 0; k < config.num_antennas; ++k)
        for (std::size_t n = 0; n < config.num_freq; ++n)
          frames.at(k, m, n) = truth.breathing(static_cast<Eigen::Index>(m)) * truth.channels[k](static_cast<Eigen::Index>(n));
  } else {
    if (target == nullptr || pulse == nullptr || truth.forward_backward.size() != config.num_antennas)
      throw ConfigError("synthesize_measurement: exact-phase mode needs target, pulse and forward-backward channels");
    const Eigen::VectorXd f = config.frequency_grid();
    for (std::size_t m = 0; m < config.num_reps; ++m)
      for (std::size_t k = 0; k < config.num_antennas; ++k) {
        const double delay = target->geometry[k] * truth.breathing(static_cast<Eigen::Index>(m)) / config.propagation_speed;
        for (std::size_t n = 0; n < config.num_freq; ++n) {
          const auto i = static_cast<Eigen::Index>(n);
          const double phase = -2.0 * std::numbers::pi * (f(i) + config.carrier) * delay;
          frames.at(k, m, n) = target->reflection[k] * std::polar(1.0, phase) * truth.forward_backward[k](i) * (*pulse)(i);
        }
      }
  }
  detail::add_noise_and_clutter(frames, lambda, rng, opts);
  return {std::move(frames), lambda};
}

/// Empty-car frames: noise (+ clutter) only, at an explicit noise precision.
inline Measurement synthesize_empty(const RadarConfig& config, double noise_precision, Rng& rng,
                                    const SynthesisOptions& opts = {}) {
  if (!(noise_precision > 0.0)) throw ConfigError("synthesize_empty: noise precision must be positive");
  FrameSet frames(config);
  detail::add_noise_and_clutter(frames, noise_precision, rng, opts);
  return {std::move(frames), noise_precision};
}

/// Everything needed to draw occupied/empty scenes for one radar setup.
/// Immutable after construction; draws depend only on the supplied Rng.
class Scenario {
public:
  struct Params {
    RadarConfig config;
    PulseSpec pulse;
    BreathingBand band;
    double amplitude_rms = 0.005;  // m
    double tau_f = 20e-9;          // s
    double k_los = 0.75;
    std::optional<TargetParams> target;  // default: monostatic limit, tau0 = 1 m / c
    double eigen_rel_tol = 1e-8;
  };

  explicit Scenario(Params p)
      : params_(std::move(p)),
        pulse_(synthesize_pulse(params_.config, params_.pulse)),
        breathing_(make_breathing_prior(params_.band, params_.config.num_reps, params_.config.rep_interval,
                                        params_.eigen_rel_tol)),
        target_(params_.target ? *params_.target
                               : TargetParams::monostatic_default(params_.config.num_antennas,
                                                                  params_.config.propagation_speed)) {
    target_.validate(params_.config.num_antennas);
    cov_hf_ = forward_channel_covariance(target_.delay, params_.tau_f, params_.k_los, params_.config.num_freq,
                                         params_.config.freq_spacing);
    hf_factor_ = covariance_factor(cov_hf_);
  }

  const RadarConfig& config() const { return params_.config; }
  const Params& params() const { return params_; }
  const Eigen::VectorXcd& pulse() const { return pulse_; }
  const BreathingPrior& breathing_prior() const { return breathing_; }
  const TargetParams& target() const { return target_; }
  const Eigen::MatrixXcd& forward_covariance() const { return cov_hf_; }

  GroundTruth draw_truth(Rng& rng) const {
    GroundTruth truth;
    truth.breathing = sample_breathing(breathing_, params_.amplitude_rms, rng);
    auto ch = sample_channels_factored(hf_factor_, target_, pulse_, params_.config, rng);
    truth.channels = std::move(ch.effective);
    truth.forward_backward = std::move(ch.forward_backward);
    return truth;
  }

  /// E||b_t||^2, summed over repetitions.
  double expected_breathing_energy() const {
    return params_.amplitude_rms * params_.amplitude_rms * breathing_.eigenvalues.sum();
  }

  /// E||h_s||^2 summed over antennas (E|h_f h_b|^2 = C_hf[n,n]^2 per bin).
  double expected_channel_energy() const {
    const Eigen::VectorXcd w = spectral_factor(params_.config, pulse_);
    double per_gain = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) per_gain += std::norm(w(i)) * std::norm(cov_hf_(i, i));
    double total = 0.0;
    for (std::size_t k = 0; k < params_.config.num_antennas; ++k)
      total += std::norm(channel_gain(target_, k, params_.config.propagation_speed)) * per_gain;
    return total;
  }

  /// Noise precision that yields the requested SNR for an average scene;
  /// used for empty-car draws at a given sweep point.
  double nominal_noise_precision(double snr_db) const {
    return noise_precision_for_snr(snr_db, expected_breathing_energy(), expected_channel_energy(), params_.config);
  }

  Measurement occupied(double snr_db, Rng& rng, const SynthesisOptions& opts = {}, GroundTruth* truth_out = nullptr) const {
    GroundTruth truth = draw_truth(rng);
    auto meas = synthesize_measurement(truth, snr_db, rng, params_.config, opts, &target_, &pulse_);
    truth.noise_precision = meas.noise_precision;
    if (truth_out != nullptr) *truth_out = std::move(truth);
    return meas;
  }

  /// Empty-car frames whose noise level is distributed exactly as in
  /// occupied(): a scene is drawn to set lambda, then only noise is emitted.
  Measurement empty(double snr_db, Rng& rng, const SynthesisOptions& opts = {}) const {
    const GroundTruth truth = draw_truth(rng);
    const double lambda =
        noise_precision_for_snr(snr_db, truth.breathing_energy(), truth.channel_energy(), params_.config);
    return synthesize_empty(params_.config, lambda, rng, opts);
  }

  /// Empty-car frames at the fixed nominal noise precision.
  Measurement empty_nominal(double snr_db, Rng& rng, const SynthesisOptions& opts = {}) const {
    return synthesize_empty(params_.config, nominal_noise_precision(snr_db), rng, opts);
  }

private:
  Params params_;
  Eigen::VectorXcd pulse_;
  BreathingPrior breathing_;
  TargetParams target_;
  Eigen::MatrixXcd cov_hf_;
  Eigen::MatrixXcd hf_factor_;
};

}  // namespace breathdet
