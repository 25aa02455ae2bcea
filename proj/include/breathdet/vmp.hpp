#pragma once

// Variational message passing for r~ = b_t (x) h_s + w with
//   q(b, h, lambda) = N(b | b^, C^_b) prod_k CN(h_k | h^_k, C^_h,k) Ga(lambda | KNM, KNM / lambda^)
// Gaussian priors on b (eigenspace of C_bt) and on each h_k, Jeffreys prior on lambda.
//
// The likelihood touches the data only through ||r~||^2 and the projections
// Z_k = Q_k^H R_k U (N x L), where R_k is the N x M matrix of antenna k,
// U the breathing eigenbasis and Q_k the eigenvectors of C_h0,k. In the
// rotated channel coordinates h' = Q^H h every covariance stays diagonal,
// so one iteration costs O(K N L) once Z_k is formed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "breathdet/errors.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"

namespace breathdet {

/// Shared, immutable priors for inference on one radar setup.
struct VmpModel {
  BreathingPrior breathing;
  std::vector<ChannelPrior> channels;  // one per antenna

  static VmpModel replicated(BreathingPrior breathing, const ChannelPrior& channel, std::size_t num_antennas) {
    return {std::move(breathing), std::vector<ChannelPrior>(num_antennas, channel)};
  }

  std::size_t num_antennas() const { return channels.size(); }
  Eigen::Index rank() const { return breathing.rank(); }

  void check(const RadarConfig& config) const {
    if (channels.size() != config.num_antennas) throw ValidationError("VmpModel: one channel prior per antenna required");
    if (static_cast<std::size_t>(breathing.num_reps()) != config.num_reps)
      throw ValidationError("VmpModel: breathing prior does not match M");
    for (const auto& c : channels)
      if (static_cast<std::size_t>(c.size()) != config.num_freq) throw ValidationError("VmpModel: channel prior does not match N");
  }

  /// Log normalizers of the Gaussian priors: -L/2 ln 2pi - 1/2 ln det C_b0 - sum_k (N ln pi + ln det C_h0,k).
  double prior_log_normalizer() const {
    const double l = static_cast<double>(rank());
    double c = -0.5 * l * std::log(2.0 * std::numbers::pi) - 0.5 * breathing.eigenvalues.array().log().sum();
    for (const auto& ch : channels)
      c -= static_cast<double>(ch.size()) * std::log(std::numbers::pi) + ch.eigvals.array().log().sum();
    return c;
  }
};

struct VmpOptions {
  double tol = 1e-8;     // relative ELBO change
  int max_iter = 500;
  int n_restarts = 1;
  bool full_shape_prefactor = false;  // use KNM - 1 instead of NM - 1 in the log-odds prefactor
};

/// Sufficient statistics of r~ for a given model.
struct VmpObservation {
  RadarConfig config;
  double energy = 0.0;                 // ||r~||^2
  std::vector<Eigen::MatrixXcd> proj;  // Z_k = Q_k^H R_k U

  double shape() const { return static_cast<double>(config.total_size()); }
};

inline VmpObservation make_observation(const StackedSignal& signal, const VmpModel& model) {
  model.check(signal.config);
  VmpObservation obs{signal.config, signal.energy(), {}};
  obs.proj.reserve(signal.config.num_antennas);
  for (std::size_t k = 0; k < signal.config.num_antennas; ++k) {
    const Eigen::MatrixXcd ru = signal.antenna_matrix(k) * model.breathing.basis.cast<cdouble>();
    obs.proj.push_back(model.channels[k].eigvecs.adjoint() * ru);
  }
  return obs;
}

struct VmpState {
  Eigen::VectorXd b_hat;                   // eigenspace breathing mean, length L
  Eigen::VectorXd cb_hat;                  // diagonal of C^_b
  std::vector<Eigen::VectorXcd> h_rot;     // Q_k^H h^_k
  std::vector<Eigen::VectorXd> ch_eig;     // C^_h,k = Q_k diag(ch_eig) Q_k^H
  std::vector<Eigen::VectorXcd> h_hat;     // h^_k, synced by sync_channels()
  double lambda_hat = 1.0;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  bool flagged = false;  // a numerical guard fired

  bool channels_set() const { return !h_rot.empty(); }

  double elbo() const {
    return elbo_trace.empty() ? -std::numeric_limits<double>::infinity() : elbo_trace.back();
  }

  Eigen::MatrixXd breathing_covariance() const { return cb_hat.asDiagonal(); }

  Eigen::MatrixXcd channel_covariance(std::size_t k, const VmpModel& model) const {
    const auto& q = model.channels.at(k).eigvecs;
    return q * ch_eig.at(k).asDiagonal() * q.adjoint();
  }

  /// U b^: the breathing estimate in slow-time coordinates.
  Eigen::VectorXd breathing_trace(const VmpModel& model) const { return model.breathing.basis * b_hat; }

  void sync_channels(const VmpModel& model) {
    h_hat.resize(h_rot.size());
    for (std::size_t k = 0; k < h_rot.size(); ++k) h_hat[k] = model.channels[k].eigvecs * h_rot[k];
  }
};

namespace detail {

inline double expected_breathing_energy(const VmpState& s) { return s.cb_hat.sum() + s.b_hat.squaredNorm(); }

inline double expected_channel_energy(const VmpState& s) {
  double e = 0.0;
  for (std::size_t k = 0; k < s.h_rot.size(); ++k) e += s.ch_eig[k].sum() + s.h_rot[k].squaredNorm();
  return e;
}

/// U^T Re{H^H r~} = sum_k Re{Z_k^H h'_k}
inline Eigen::VectorXd correlate_channels(const VmpState& s, const VmpObservation& obs) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(s.b_hat.size());
  for (std::size_t k = 0; k < obs.proj.size(); ++k) y += (obs.proj[k].adjoint() * s.h_rot[k]).real();
  return y;
}

/// <||r~ - b_t (x) h_s||^2>_q
inline double expected_residual(const VmpState& s, const VmpObservation& obs) {
  return obs.energy - 2.0 * s.b_hat.dot(correlate_channels(s, obs)) +
         expected_breathing_energy(s) * expected_channel_energy(s);
}

inline double gamma_entropy(double shape, double rate) {
  return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * boost::math::digamma(shape);
}

inline void step(VmpState& s, const VmpObservation& obs, const VmpModel& model) {
  const double lambda = s.lambda_hat;
  const double eb = expected_breathing_energy(s);
  const std::size_t k_count = obs.proj.size();
  s.h_rot.resize(k_count);
  s.ch_eig.resize(k_count);

  // channels, using b^ and E_b from the previous iteration
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& d = model.channels[k].eigvals;
    s.ch_eig[k] = (d.cwiseInverse().array() + lambda * eb).inverse().matrix();
    s.h_rot[k] = lambda * s.ch_eig[k].cast<cdouble>().cwiseProduct(obs.proj[k] * s.b_hat.cast<cdouble>());
  }

  // breathing, using the fresh channel estimates
  const double eh = expected_channel_energy(s);
  s.cb_hat = (model.breathing.eigenvalues.cwiseInverse().array() + 2.0 * lambda * eh).inverse().matrix();
  const Eigen::VectorXd y = correlate_channels(s, obs);
  s.b_hat = 2.0 * lambda * s.cb_hat.cwiseProduct(y);

  // noise precision
  const double denom = obs.energy - 2.0 * s.b_hat.dot(y) + expected_breathing_energy(s) * eh;
  const double floor = 1e-300 * obs.energy;
  if (!(denom > floor)) {
    s.flagged = true;
    s.lambda_hat = obs.shape() / std::max(floor, std::numeric_limits<double>::min());
  } else {
    s.lambda_hat = obs.shape() / denom;
  }
}

}  // namespace detail

/// lambda^0 = KNM / ||r~||^2, C^_b = C_b0, b^0 ~ p(b). Channels are set by the first update.
inline VmpState init_state(const VmpObservation& obs, const VmpModel& model, Rng& rng) {
  if (!(obs.energy > 0.0)) throw NumericalError("init_state: input signal has zero energy");
  VmpState s;
  s.lambda_hat = obs.shape() / obs.energy;
  s.cb_hat = model.breathing.eigenvalues;
  s.b_hat = model.breathing.eigenvalues.cwiseSqrt().cwiseProduct(standard_normal(model.rank(), rng));
  return s;
}

inline VmpState init_state(const StackedSignal& signal, const VmpModel& model, Rng& rng) {
  return init_state(make_observation(signal, model), model, rng);
}

/// Evidence lower bound <ln p(r~, b, h, lambda)>_q + H(q), Jeffreys prior taken as exactly 1/lambda.
inline double compute_elbo(const VmpState& s, const VmpObservation& obs, const VmpModel& model) {
  if (!s.channels_set()) throw ValidationError("compute_elbo: channel posteriors are not set");
  if ((s.cb_hat.array() <= 0.0).any()) throw NumericalError("compute_elbo: breathing covariance not positive definite");
  for (const auto& c : s.ch_eig)
    if ((c.array() <= 0.0).any()) throw NumericalError("compute_elbo: channel covariance not positive definite");

  const double alpha = obs.shape();
  const double rate = alpha / s.lambda_hat;
  const double mean_log_lambda = boost::math::digamma(alpha) - std::log(rate);
  const double n = static_cast<double>(obs.config.num_freq);
  const double l = static_cast<double>(s.b_hat.size());
  const Eigen::ArrayXd cb0 = model.breathing.eigenvalues.array();

  // likelihood and Jeffreys prior
  double elbo = (alpha - 1.0) * mean_log_lambda - alpha * std::log(std::numbers::pi) -
                s.lambda_hat * detail::expected_residual(s, obs);
  // breathing prior cross term and entropy
  elbo += -0.5 * l * std::log(2.0 * std::numbers::pi) - 0.5 * cb0.log().sum() -
          0.5 * ((s.b_hat.array().square() + s.cb_hat.array()) / cb0).sum();
  elbo += 0.5 * l * std::log(2.0 * std::numbers::pi * std::numbers::e) + 0.5 * s.cb_hat.array().log().sum();
  // channel priors and entropies
  for (std::size_t k = 0; k < s.h_rot.size(); ++k) {
    const Eigen::ArrayXd d = model.channels[k].eigvals.array();
    elbo += -n * std::log(std::numbers::pi) - d.log().sum() -
            ((s.h_rot[k].array().abs2() + s.ch_eig[k].array()) / d).sum();
    elbo += n * std::log(std::numbers::pi * std::numbers::e) + s.ch_eig[k].array().log().sum();
  }
  elbo += detail::gamma_entropy(alpha, rate);
  return elbo;
}

inline double compute_elbo(const VmpState& s, const StackedSignal& signal, const VmpModel& model) {
  return compute_elbo(s, make_observation(signal, model), model);
}

/// One pass of the message updates: channel covariances and means, breathing
/// covariance and mean, then noise precision.
inline VmpState update_iteration(VmpState state, const VmpObservation& obs, const VmpModel& model) {
  detail::step(state, obs, model);
  ++state.iterations;
  state.sync_channels(model);
  return state;
}

inline VmpState update_iteration(VmpState state, const StackedSignal& signal, const VmpModel& model) {
  return update_iteration(std::move(state), make_observation(signal, model), model);
}

/// Iterates from a given initial state until the relative ELBO change drops below tol.
inline VmpState iterate_to_convergence(VmpState s, const VmpObservation& obs, const VmpModel& model,
                                       const VmpOptions& opts) {
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw ConfigError("VmpOptions: need tol > 0 and max_iter >= 1");
  for (int it = 0; it < opts.max_iter; ++it) {
    detail::step(s, obs, model);
    ++s.iterations;
    const double elbo = compute_elbo(s, obs, model);
    const bool have_prev = !s.elbo_trace.empty();
    const double prev = have_prev ? s.elbo_trace.back() : 0.0;
    s.elbo_trace.push_back(elbo);
    if (!std::isfinite(elbo)) {
      s.flagged = true;
      break;
    }
    if (have_prev && std::abs(elbo - prev) < opts.tol * std::abs(elbo)) {
      s.converged = true;
      break;
    }
  }
  s.sync_channels(model);
  return s;
}

/// Runs n_restarts random initializations and keeps the highest final ELBO.
inline VmpState run_inference(const VmpObservation& obs, const VmpModel& model, const VmpOptions& opts, Rng& rng) {
  if (opts.n_restarts < 1) throw ConfigError("VmpOptions: n_restarts must be at least 1");
  VmpState best;
  bool have_best = false;
  for (int r = 0; r < opts.n_restarts; ++r) {
    VmpState s = iterate_to_convergence(init_state(obs, model, rng), obs, model, opts);
    if (!have_best || s.elbo() > best.elbo()) {
      best = std::move(s);
      have_best = true;
    }
  }
  return best;
}

inline VmpState run_inference(const StackedSignal& signal, const VmpModel& model, const VmpOptions& opts, Rng& rng) {
  return run_inference(make_observation(signal, model), model, opts, rng);
}

struct NullFit {
  double lambda0_hat;
  double elbo0;
};

/// Empty-car model: q0(lambda) = Ga(KNM, ||r~||^2) in closed form.
inline NullFit null_model_fit(double energy, std::size_t total_size) {
  if (!(energy > 0.0)) throw NumericalError("null_model_fit: input signal has zero energy");
  const double alpha = static_cast<double>(total_size);
  const double mean_log_lambda = boost::math::digamma(alpha) - std::log(energy);
  const double elbo = (alpha - 1.0) * mean_log_lambda - alpha * std::log(std::numbers::pi) - alpha +
                      detail::gamma_entropy(alpha, energy);
  return {alpha / energy, elbo};
}

inline NullFit null_model_fit(const StackedSignal& signal) {
  return null_model_fit(signal.energy(), signal.config.total_size());
}

/// Log-odds statistic: prefactor * ln(lambda1 / lambda0) minus the prior
/// penalties plus the entropy difference H(q1) - H(q0). With the KNM - 1
/// prefactor this equals elbo1 - elbo0 - prior_log_normalizer().
inline double log_odds_statistic(const VmpState& s, const VmpObservation& obs, const VmpModel& model,
                                 const NullFit& null, bool full_shape_prefactor = false) {
  const auto& cfg = obs.config;
  const double alpha = obs.shape();
  const double prefactor =
      full_shape_prefactor ? alpha - 1.0 : static_cast<double>(cfg.num_freq * cfg.num_reps) - 1.0;
  const double n = static_cast<double>(cfg.num_freq);
  const double l = static_cast<double>(s.b_hat.size());

  double stat = prefactor * std::log(s.lambda_hat / null.lambda0_hat);
  double entropy1 = 0.5 * l * std::log(2.0 * std::numbers::pi * std::numbers::e) + 0.5 * s.cb_hat.array().log().sum();
  for (std::size_t k = 0; k < s.h_rot.size(); ++k) {
    const Eigen::ArrayXd d = model.channels[k].eigvals.array();
    stat -= (s.h_rot[k].array().abs2() / d).sum() + (s.ch_eig[k].array() / d).sum();
    entropy1 += n * std::log(std::numbers::pi * std::numbers::e) + s.ch_eig[k].array().log().sum();
  }
  const Eigen::ArrayXd cb0 = model.breathing.eigenvalues.array();
  stat -= 0.5 * ((s.b_hat.array().square() / cb0).sum() + (s.cb_hat.array() / cb0).sum());
  entropy1 += detail::gamma_entropy(alpha, alpha / s.lambda_hat);
  const double entropy0 = detail::gamma_entropy(alpha, alpha / null.lambda0_hat);
  return stat + entropy1 - entropy0;
}

}  // namespace breathdet
