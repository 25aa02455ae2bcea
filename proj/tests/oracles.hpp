#pragma once

// Independent reference computations used by the unit and acceptance tests:
// a literal dense implementation of the message updates, random tiny
// instances, and the log evidence of a scalar model by quadrature.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "breathdet/priors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"
#include "breathdet/vmp.hpp"

namespace oracle {

using breathdet::cdouble;

struct TinyInstance {
  breathdet::RadarConfig config;
  breathdet::VmpModel model;
  breathdet::StackedSignal signal;
};

/// Random real rank-L prior on M repetitions.
inline breathdet::BreathingPrior random_breathing_prior(std::size_t m, std::size_t l, breathdet::Rng& rng) {
  Eigen::MatrixXd a(m, l);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = breathdet::standard_normal(1, rng)(0);
  breathdet::BreathingPrior p;
  p.cov_full = a * a.transpose();
  auto red = breathdet::eigen_reduce(p.cov_full, 1e-10);
  p.basis = red.basis;
  p.eigenvalues = red.eigenvalues;
  return p;
}

inline breathdet::ChannelPrior random_channel_prior(std::size_t n, breathdet::Rng& rng) {
  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXcd a(ni, ni);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = breathdet::standard_complex_normal(1, rng)(0);
  return breathdet::make_channel_prior(a * a.adjoint() + 0.1 * Eigen::MatrixXcd::Identity(ni, ni));
}

inline TinyInstance random_instance(std::size_t k, std::size_t n, std::size_t m, std::size_t l, breathdet::Rng& rng) {
  TinyInstance t;
  t.config.num_antennas = k;
  t.config.num_freq = n;
  t.config.num_reps = m;
  t.model.breathing = random_breathing_prior(m, l, rng);
  for (std::size_t i = 0; i < k; ++i) t.model.channels.push_back(random_channel_prior(n, rng));
  t.signal = {t.config, breathdet::standard_complex_normal(static_cast<Eigen::Index>(t.config.total_size()), rng)};
  return t;
}

/// Variational factors in plain (non-rotated) coordinates.
struct DenseState {
  Eigen::VectorXd b;     // L
  Eigen::MatrixXd cb;    // L x L
  Eigen::VectorXcd h;    // K N, antenna-major
  Eigen::MatrixXcd ch;   // K N x K N
  double lambda = 1.0;
};

/// One pass of the updates written with explicit Kronecker products and inverses:
///   C_h = (C_h0^-1 + lambda <b_t^T b_t> I)^-1,  h = lambda C_h B^H r
///   C_b = (C_b0^-1 + 2 lambda <h^H h> I)^-1,   b = 2 lambda C_b U^T Re{H^H r}
///   lambda = KNM / <||r - (U b) (x) h||^2>
/// with B = (U b) (x) I_KN and H = I_M (x) h.
inline DenseState dense_step(const DenseState& s, const TinyInstance& t) {
  const auto& cfg = t.config;
  const auto kn = static_cast<Eigen::Index>(cfg.num_antennas * cfg.num_freq);
  const auto m = static_cast<Eigen::Index>(cfg.num_reps);
  const Eigen::MatrixXd& u = t.model.breathing.basis;
  const Eigen::MatrixXd cb0 = t.model.breathing.eigenvalues.asDiagonal();
  Eigen::MatrixXcd ch0 = Eigen::MatrixXcd::Zero(kn, kn);
  const auto n = static_cast<Eigen::Index>(cfg.num_freq);
  for (std::size_t k = 0; k < cfg.num_antennas; ++k)
    ch0.block(static_cast<Eigen::Index>(k) * n, static_cast<Eigen::Index>(k) * n, n, n) = t.model.channels[k].cov;
  const Eigen::VectorXcd& r = t.signal.data;

  DenseState out;
  const Eigen::VectorXd bt = u * s.b;
  const double ebt = bt.squaredNorm() + (u * s.cb * u.transpose()).trace();
  Eigen::MatrixXcd big_b = Eigen::MatrixXcd::Zero(m * kn, kn);
  for (Eigen::Index i = 0; i < m; ++i) big_b.block(i * kn, 0, kn, kn) = bt(i) * Eigen::MatrixXcd::Identity(kn, kn);
  out.ch = (ch0.inverse() + s.lambda * ebt * Eigen::MatrixXcd::Identity(kn, kn)).inverse();
  out.h = s.lambda * out.ch * (big_b.adjoint() * r);

  const double ehh = out.h.squaredNorm() + out.ch.trace().real();
  Eigen::MatrixXcd big_h = Eigen::MatrixXcd::Zero(m * kn, m);
  for (Eigen::Index i = 0; i < m; ++i) big_h.block(i * kn, i, kn, 1) = out.h;
  const auto l = u.cols();
  out.cb = (cb0.inverse() + 2.0 * s.lambda * ehh * Eigen::MatrixXd::Identity(l, l)).inverse();
  const Eigen::VectorXd proj = u.transpose() * (big_h.adjoint() * r).real();
  out.b = 2.0 * s.lambda * out.cb * proj;

  const Eigen::VectorXd bt_new = u * out.b;
  const double ebt_new = bt_new.squaredNorm() + (u * out.cb * u.transpose()).trace();
  const double residual = r.squaredNorm() - 2.0 * (bt_new.transpose() * (big_h.adjoint() * r).real()).value() +
                          ebt_new * ehh;
  out.lambda = static_cast<double>(cfg.total_size()) / residual;
  return out;
}

/// Expands a structured state to plain coordinates.
inline DenseState to_dense(const breathdet::VmpState& s, const TinyInstance& t) {
  DenseState d;
  d.b = s.b_hat;
  d.cb = s.breathing_covariance();
  d.lambda = s.lambda_hat;
  const auto n = static_cast<Eigen::Index>(t.config.num_freq);
  const auto kn = n * static_cast<Eigen::Index>(t.config.num_antennas);
  d.h = Eigen::VectorXcd::Zero(kn);
  d.ch = Eigen::MatrixXcd::Zero(kn, kn);
  for (std::size_t k = 0; k < s.h_rot.size(); ++k) {
    const auto off = static_cast<Eigen::Index>(k) * n;
    d.h.segment(off, n) = t.model.channels[k].eigvecs * s.h_rot[k];
    d.ch.block(off, off, n, n) = s.channel_covariance(k, t.model);
  }
  return d;
}

/// Largest absolute difference over all factor parameters.
inline double max_abs_diff(const DenseState& a, const DenseState& b) {
  double d = std::abs(a.lambda - b.lambda);
  d = std::max(d, (a.b - b.b).cwiseAbs().maxCoeff());
  d = std::max(d, (a.cb - b.cb).cwiseAbs().maxCoeff());
  d = std::max(d, (a.h - b.h).cwiseAbs().maxCoeff());
  d = std::max(d, (a.ch - b.ch).cwiseAbs().maxCoeff());
  return d;
}

/// ln p(r) for K = N = 1, M = 2, L = 1 with b ~ N(0, c_b), h ~ CN(0, c_h) and
/// p(lambda) = 1 / lambda, lambda integrated out:
///   p(r | b, h) = Gamma(2) / (pi^2 ||r - u b h||^4).
/// With h = rho e^{j phi} the phase integral is closed form,
///   int (A - B cos phi)^-2 dphi = 2 pi A / (A^2 - B^2)^{3/2},
/// A = ||r||^2 + b^2 rho^2, B = 2 |b| rho |u^T r|, leaving a 2-D quadrature.
inline double scalar_log_evidence(const Eigen::Vector2cd& r, const Eigen::Vector2d& u, double c_b, double c_h) {
  using boost::math::quadrature::gauss_kronrod;
  const double e = r.squaredNorm();
  const double g = std::abs(u(0) * r(0) + u(1) * r(1));
  const double pi = std::numbers::pi;
  auto inner = [&](double b) {
    auto f = [&](double rho) {
      const double a = e + b * b * rho * rho;
      const double bb = 2.0 * std::abs(b) * rho * g;
      const double phase = 2.0 * pi * a / std::pow(a * a - bb * bb, 1.5);
      const double prior_h = std::exp(-rho * rho / c_h) / (pi * c_h);
      return rho * prior_h * phase / (pi * pi);
    };
    return gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13);
  };
  auto outer = [&](double b) {
    const double prior_b = std::exp(-0.5 * b * b / c_b) / std::sqrt(2.0 * pi * c_b);
    return prior_b * inner(b);
  };
  // the integrand is even in b
  const double lim = std::numeric_limits<double>::infinity();
  return std::log(2.0 * gauss_kronrod<double, 61>::integrate(outer, 0.0, lim, 15, 1e-12));
}

}  // namespace oracle
