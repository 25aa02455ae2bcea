#pragma once

// Prior covariances: breathing motion from a rectangular double-sided PSD
// (and its eigenspace reduction), and the per-antenna channel priors.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "breathdet/errors.hpp"
#include "breathdet/signal.hpp"

namespace breathdet {

struct BreathingBand {
  double f_min = 9.0 / 60.0;  // Hz
  double f_max = 1.0;         // Hz

  void validate(double rep_interval) const {
    const double nyquist = 0.5 / rep_interval;
    if (!(f_min >= 0.0 && f_min < f_max))
      throw ConfigError("BreathingBand: need 0 <= f_min < f_max");
    if (!(f_max < nyquist))
      throw ConfigError("BreathingBand: f_max " + std::to_string(f_max) + " Hz is not below the slow-time Nyquist rate " +
                        std::to_string(nyquist) + " Hz");
  }
};

/// Autocorrelation of the unit-power rectangular-PSD process at lag tau.
inline double breathing_autocorrelation(double tau, const BreathingBand& band) {
  if (tau == 0.0) return 1.0;
  const double w = 2.0 * std::numbers::pi * tau;
  return (std::sin(w * band.f_max) - std::sin(w * band.f_min)) / (w * (band.f_max - band.f_min));
}

/// C_bt[m, m'] = c(|m - m'| T_rep).
inline Eigen::MatrixXd breathing_covariance(const BreathingBand& band, std::size_t num_reps, double rep_interval) {
  if (!(rep_interval > 0.0)) throw ConfigError("breathing_covariance: repetition interval must be positive");
  if (num_reps < 1) throw ConfigError("breathing_covariance: need at least one repetition");
  band.validate(rep_interval);
  const auto m = static_cast<Eigen::Index>(num_reps);
  Eigen::VectorXd lags(m);
  for (Eigen::Index i = 0; i < m; ++i) lags(i) = breathing_autocorrelation(static_cast<double>(i) * rep_interval, band);
  Eigen::MatrixXd cov(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) cov(i, j) = lags(std::abs(i - j));
  return cov;
}

struct EigenReduction {
  Eigen::MatrixXd basis;        // U, M x L, orthonormal columns
  Eigen::VectorXd eigenvalues;  // diagonal of C_b, descending
  Eigen::Index rank() const { return eigenvalues.size(); }
};

/// Keeps the eigenpairs whose eigenvalue exceeds rel_tol * lambda_max.
inline EigenReduction eigen_reduce(const Eigen::MatrixXd& cov, double rel_tol = 1e-8) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw ValidationError("eigen_reduce: matrix must be square");
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw ValidationError("eigen_reduce: rel_tol must lie in (0, 1)");
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("eigen_reduce: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (cov + cov.transpose()));
  if (solver.info() != Eigen::Success) throw NumericalError("eigen_reduce: eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double cut = rel_tol * values.maxCoeff();
  Eigen::Index keep = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > cut) ++keep;

  EigenReduction out{Eigen::MatrixXd(cov.rows(), keep), Eigen::VectorXd(keep)};
  for (Eigen::Index j = 0; j < keep; ++j) {
    const Eigen::Index src = values.size() - 1 - j;
    out.eigenvalues(j) = values(src);
    out.basis.col(j) = solver.eigenvectors().col(src);
  }
  return out;
}

/// Breathing prior in both the original (slow-time) and eigen coordinates.
/// The eigenvalue diagonal doubles as the eigenspace prior covariance C_b0.
struct BreathingPrior {
  Eigen::MatrixXd cov_full;     // C_bt, M x M
  Eigen::MatrixXd basis;        // U, M x L
  Eigen::VectorXd eigenvalues;  // C_b, length L

  Eigen::Index rank() const { return eigenvalues.size(); }
  Eigen::Index num_reps() const { return cov_full.rows(); }
};

inline BreathingPrior make_breathing_prior(const BreathingBand& band, std::size_t num_reps, double rep_interval,
                                           double rel_tol = 1e-8) {
  BreathingPrior prior;
  prior.cov_full = breathing_covariance(band, num_reps, rep_interval);
  auto red = eigen_reduce(prior.cov_full, rel_tol);
  prior.basis = std::move(red.basis);
  prior.eigenvalues = std::move(red.eigenvalues);
  return prior;
}

// ---------------------------------------------------------------------------
// Channel priors

struct KnownDelayParams {
  double tau0;   // LoS delay, s
  double tau_f;  // diffuse decay constant, s
  double k_los;  // E_LoS / E_DM
};

struct GammaShapedParams {
  double tau0_expected;  // s
  double tau_f;          // s
  double shape() const { return 1.0 + 2.0 * tau0_expected / tau_f; }
};

struct CustomPrior {};

using ChannelPriorKind = std::variant<KnownDelayParams, GammaShapedParams, CustomPrior>;

/// Complex channel prior C_h0 together with its eigendecomposition
/// C_h0 = Q diag(d) Q^H (d strictly positive after repair).
struct ChannelPrior {
  Eigen::MatrixXcd cov;
  Eigen::MatrixXcd eigvecs;
  Eigen::VectorXd eigvals;
  ChannelPriorKind kind = CustomPrior{};
  int clipped_eigenvalues = 0;  // count of negative eigenvalues zeroed during repair

  Eigen::Index size() const { return cov.rows(); }
};

/// Forward (or backward) channel covariance: LoS at tau0 plus a diffuse
/// tail with exponential power delay profile. E_LoS + E_DM = 1, so the
/// diagonal is one and the trace is N.
inline Eigen::MatrixXcd forward_channel_covariance(double tau0, double tau_f, double k_los, std::size_t num_freq,
                                                   double freq_spacing) {
  if (!(tau0 > 0.0) || !(tau_f > 0.0) || !(k_los > 0.0))
    throw ConfigError("channel prior: tau0, tau_f and K_LoS must be positive");
  const double e_los = k_los / (1.0 + k_los);
  const double e_dm = 1.0 / (1.0 + k_los);
  const auto n = static_cast<Eigen::Index>(num_freq);
  const cdouble j{0.0, 1.0};
  Eigen::MatrixXcd cov(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      const double lag = static_cast<double>(a - b) * freq_spacing;
      const cdouble diffuse = e_dm / (1.0 + j * (2.0 * std::numbers::pi * tau_f * lag));
      cov(a, b) = (e_los + diffuse) * std::exp(-j * (2.0 * std::numbers::pi * tau0 * lag));
    }
  return cov;
}

/// Delay-agnostic forward-backward covariance (1 + j 2 pi tau_f df (n - n'))^-a,
/// a = 1 + 2 tau0 / tau_f, whose delay profile peaks near 2 tau0.
inline Eigen::MatrixXcd gamma_fb_covariance(double tau0_expected, double tau_f, std::size_t num_freq,
                                            double freq_spacing) {
  if (!(tau0_expected > 0.0) || !(tau_f > 0.0)) throw ConfigError("channel prior: tau0 and tau_f must be positive");
  const double a = GammaShapedParams{tau0_expected, tau_f}.shape();
  const auto n = static_cast<Eigen::Index>(num_freq);
  Eigen::MatrixXcd cov(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      const double x = 2.0 * std::numbers::pi * tau_f * freq_spacing * static_cast<double>(r - c);
      cov(r, c) = std::pow(cdouble{1.0, x}, -a);
    }
  return cov;
}

namespace detail {

inline void normalize_trace(Eigen::MatrixXcd& cov) {
  const double tr = cov.diagonal().real().sum();
  if (!(tr > 0.0)) throw NumericalError("channel prior: covariance has zero trace");
  cov *= static_cast<double>(cov.rows()) / tr;
}

}  // namespace detail

/// Symmetrizes, trace-normalizes to N, clips negative eigenvalues and adds a
/// ridge of 1e-10 * trace / N so the result is strictly positive definite.
inline ChannelPrior make_channel_prior(Eigen::MatrixXcd cov, ChannelPriorKind kind = CustomPrior{}) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw ValidationError("channel prior: matrix must be square");
  const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov - cov.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw ValidationError("channel prior: matrix is not Hermitian");
  cov = (0.5 * (cov + cov.adjoint())).eval();
  detail::normalize_trace(cov);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("channel prior: eigendecomposition failed");
  Eigen::VectorXd d = solver.eigenvalues();
  const double n = static_cast<double>(cov.rows());

  ChannelPrior prior;
  prior.kind = kind;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) < 0.0) {
      if (d(i) < -1e-9 * d.maxCoeff()) ++prior.clipped_eigenvalues;
      d(i) = 0.0;
    }
  d.array() += 1e-10 * d.sum() / n;
  d *= n / d.sum();

  prior.eigvecs = solver.eigenvectors();
  prior.eigvals = d;
  prior.cov = prior.eigvecs * d.asDiagonal() * prior.eigvecs.adjoint();
  prior.cov = (0.5 * (prior.cov + prior.cov.adjoint())).eval();
  return prior;
}

/// Maps a forward-backward covariance onto h_s coordinates:
/// D C_fb D^H with D = diag((f + f_c) .* s / f_c).
inline Eigen::MatrixXcd spectral_weighting(const Eigen::MatrixXcd& c_fb, const RadarConfig& config,
                                           const Eigen::VectorXcd& pulse) {
  const auto n = static_cast<Eigen::Index>(config.num_freq);
  if (c_fb.rows() != n || pulse.size() != n) throw ValidationError("spectral_weighting: dimension mismatch");
  Eigen::VectorXcd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i) = pulse(i) * ((config.frequency(static_cast<std::size_t>(i)) + config.carrier) / config.carrier);
  return w.asDiagonal() * c_fb * w.conjugate().asDiagonal();
}

/// Prior for a target at a known LoS delay. The forward and backward channels
/// are independent with identical covariance, so C_fb = C_hf .* C_hb.
inline ChannelPrior channel_prior_known_delay(double tau0, double tau_f, double k_los, const RadarConfig& config,
                                              const Eigen::VectorXcd& pulse) {
  const Eigen::MatrixXcd c_hf = forward_channel_covariance(tau0, tau_f, k_los, config.num_freq, config.freq_spacing);
  const Eigen::MatrixXcd c_fb = c_hf.cwiseProduct(c_hf);
  return make_channel_prior(spectral_weighting(c_fb, config, pulse), KnownDelayParams{tau0, tau_f, k_los});
}

/// Gamma-shaped prior centred on an expected (not exact) target delay.
inline ChannelPrior channel_prior_gamma(double tau0_expected, double tau_f, const RadarConfig& config,
                                        const Eigen::VectorXcd& pulse) {
  const Eigen::MatrixXcd c_fb = gamma_fb_covariance(tau0_expected, tau_f, config.num_freq, config.freq_spacing);
  return make_channel_prior(spectral_weighting(c_fb, config, pulse), GammaShapedParams{tau0_expected, tau_f});
}

}  // namespace breathdet
