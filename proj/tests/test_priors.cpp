#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "breathdet/errors.hpp"
#include "breathdet/priors.hpp"
#include "breathdet/signal.hpp"

using namespace breathdet;

namespace {

constexpr double kLight = 299792458.0;

// trapezoid rule over the positive half of the rectangular PSD
double autocorrelation_by_quadrature(double tau, double f_min, double f_max) {
  const int steps = 2'000'000;
  const double h = (f_max - f_min) / steps;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double f = f_min + i * h;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    acc += w * std::cos(2.0 * std::numbers::pi * f * tau);
  }
  return acc * h / (f_max - f_min);
}

void expect_valid_channel_prior(const ChannelPrior& p) {
  const auto n = static_cast<double>(p.size());
  EXPECT_LT((p.cov - p.cov.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(p.cov.diagonal().real().sum(), n, 1e-9 * n);
  EXPECT_GT(p.eigvals.minCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(p.cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9);
  EXPECT_LT((p.eigvecs * p.eigvals.asDiagonal() * p.eigvecs.adjoint() - p.cov).cwiseAbs().maxCoeff(), 1e-10);
}

// Diagonal power profile v(tau)^H C v(tau) on the IDFT delay grid tau_i = i / (N df).
Eigen::Index delay_profile_peak(const Eigen::MatrixXcd& c, double df) {
  const auto n = c.rows();
  Eigen::VectorXd power(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tau = static_cast<double>(i) / (static_cast<double>(n) * df);
    Eigen::VectorXcd v(n);
    for (Eigen::Index q = 0; q < n; ++q)
      v(q) = std::polar(1.0, -2.0 * std::numbers::pi * tau * df * static_cast<double>(q));
    power(i) = (v.adjoint() * c * v).value().real();
  }
  Eigen::Index peak;
  power.maxCoeff(&peak);
  return peak;
}

}  // namespace

TEST(BreathingPrior, DefaultBand) {
  const BreathingBand band;
  EXPECT_DOUBLE_EQ(band.f_min, 9.0 / 60.0);
  EXPECT_DOUBLE_EQ(band.f_max, 1.0);
}

TEST(BreathingPrior, UnitDiagonalAndToeplitz) {
  const Eigen::MatrixXd c = breathing_covariance({0.2, 0.7}, 40, 0.1);
  for (Eigen::Index i = 0; i < c.rows(); ++i) EXPECT_EQ(c(i, i), 1.0);
  EXPECT_EQ(c(3, 7), c(7, 3));
  EXPECT_EQ(c(3, 7), c(10, 14));
}

TEST(BreathingPrior, AutocorrelationMatchesQuadrature) {
  const double q = autocorrelation_by_quadrature(0.1, 0.15, 1.0);
  EXPECT_NEAR(breathing_autocorrelation(0.1, {0.15, 1.0}), q, 1e-9);
  const double q2 = autocorrelation_by_quadrature(1.7, 0.15, 1.0);
  EXPECT_NEAR(breathing_autocorrelation(1.7, {0.15, 1.0}), q2, 1e-9);
}

TEST(BreathingPrior, BandValidation) {
  EXPECT_THROW(breathing_covariance({0.15, 5.0}, 10, 0.1), ConfigError);
  EXPECT_THROW(breathing_covariance({1.0, 0.5}, 10, 0.1), ConfigError);
  EXPECT_THROW(breathing_covariance({0.15, 1.0}, 10, 0.0), ConfigError);
  EXPECT_NO_THROW(breathing_covariance({0.15, 4.9}, 10, 0.1));
}

TEST(EigenReduce, DiagonalMatrix) {
  Eigen::MatrixXd c = Eigen::Vector3d(3.0, 2.0, 0.0).asDiagonal();
  const auto r = eigen_reduce(c);
  ASSERT_EQ(r.rank(), 2);
  EXPECT_NEAR(r.eigenvalues(0), 3.0, 1e-15);
  EXPECT_NEAR(r.eigenvalues(1), 2.0, 1e-15);
  EXPECT_NEAR(std::abs(r.basis(0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(r.basis(1, 1)), 1.0, 1e-15);
  EXPECT_NEAR(r.basis(2, 0), 0.0, 1e-15);
}

TEST(EigenReduce, IdentityKeepsEverything) {
  const auto r = eigen_reduce(Eigen::MatrixXd::Identity(7, 7));
  EXPECT_EQ(r.rank(), 7);
  EXPECT_TRUE(r.eigenvalues.isApprox(Eigen::VectorXd::Ones(7)));
  EXPECT_TRUE((r.basis.transpose() * r.basis).isApprox(Eigen::MatrixXd::Identity(7, 7)));
}

TEST(EigenReduce, RejectsAsymmetricAndBadTolerance) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 1) = 0.5;
  EXPECT_THROW(eigen_reduce(c), ValidationError);
  EXPECT_THROW(eigen_reduce(Eigen::MatrixXd::Identity(3, 3), 0.0), ValidationError);
  EXPECT_THROW(eigen_reduce(Eigen::MatrixXd(2, 3)), ValidationError);
}

TEST(EigenReduce, DefaultBreathingRankGolden) {
  const auto prior = make_breathing_prior({0.15, 1.0}, 100, 0.1);
  EXPECT_EQ(prior.rank(), 29);
  // time-bandwidth count 2 (f_max - f_min) M T_rep = 17, plus transition modes
  EXPECT_GE(prior.rank(), 17);
  const Eigen::MatrixXd rec = prior.basis * prior.eigenvalues.asDiagonal() * prior.basis.transpose();
  EXPECT_LE((rec - prior.cov_full).norm() / prior.cov_full.norm(), 1e-6);
  for (Eigen::Index i = 1; i < prior.rank(); ++i) EXPECT_LE(prior.eigenvalues(i), prior.eigenvalues(i - 1));
}

TEST(ChannelPrior, ForwardCovarianceZeroLagAndGolden) {
  const Eigen::MatrixXcd c = forward_channel_covariance(1.0 / kLight, 20e-9, 0.75, 128, 7.8125e6);
  for (Eigen::Index i = 0; i < c.rows(); ++i) EXPECT_NEAR(std::abs(c(i, i) - cdouble(1.0, 0.0)), 0.0, 1e-15);
  // 40-digit evaluation of the closed form
  EXPECT_NEAR(c(0, 1).real(), 0.66335859690758721153, 1e-14);
  EXPECT_NEAR(c(0, 1).imag(), 0.3991365690384115584, 1e-14);
  EXPECT_NEAR(std::abs(c(1, 0) - std::conj(c(0, 1))), 0.0, 1e-15);
}

TEST(ChannelPrior, GammaShape) {
  const GammaShapedParams p{1.0 / kLight, 20e-9};
  EXPECT_NEAR(p.shape(), 1.3335640951981520496, 1e-14);
  const Eigen::MatrixXcd c = gamma_fb_covariance(1.0 / kLight, 20e-9, 16, 15.625e6);
  for (Eigen::Index i = 0; i < c.rows(); ++i) EXPECT_NEAR(std::abs(c(i, i) - cdouble(1.0, 0.0)), 0.0, 1e-15);
}

TEST(ChannelPrior, GammaDelayProfilePeaksAtAliasedGammaMode) {
  for (const double df : {7.8125e6, 15.625e6}) {
    const std::size_t n = static_cast<std::size_t>(std::llround(1e9 / df));
    const double tau0 = 1.0 / kLight;
    const Eigen::MatrixXcd c = gamma_fb_covariance(tau0, 20e-9, n, df);
    const double bin = 1.0 / (static_cast<double>(n) * df);
    // continuous gamma density t^(a-1) e^(-t/tau_f), periodized over the unambiguous range n * bin
    const double a = 1.0 + 2.0 * tau0 / 20e-9;
    Eigen::VectorXd aliased = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < aliased.size(); ++i)
      for (int wrap = 0; wrap < 200; ++wrap) {
        const double t = (static_cast<double>(i) + static_cast<double>(wrap * n)) * bin;
        if (t > 0.0) aliased(i) += std::pow(t, a - 1.0) * std::exp(-t / 20e-9);
      }
    Eigen::Index expected;
    aliased.maxCoeff(&expected);
    const auto peak = delay_profile_peak(c, df);
    EXPECT_EQ(peak, expected) << "df=" << df;
    EXPECT_LE(std::abs(static_cast<double>(peak) - 2.0 * tau0 / bin), 1.0) << "df=" << df;
  }
}

TEST(ChannelPrior, KnownDelayProfilePeaksAtTwiceTau0) {
  const double tau0 = 3.0 / kLight;
  const Eigen::MatrixXcd hf = forward_channel_covariance(tau0, 20e-9, 0.75, 64, 15.625e6);
  const double bin = 1.0 / (64 * 15.625e6);
  EXPECT_EQ(delay_profile_peak(hf.cwiseProduct(hf), 15.625e6), std::llround(2.0 * tau0 / bin));
}

TEST(ChannelPrior, BothKindsAreHermitianPsdWithTraceN) {
  RadarConfig cfg;
  const Eigen::VectorXcd s = synthesize_pulse(cfg, PulseSpec{});
  const auto known = channel_prior_known_delay(1.0 / kLight, 20e-9, 0.75, cfg, s);
  const auto gamma = channel_prior_gamma(1.0 / kLight, 20e-9, cfg, s);
  expect_valid_channel_prior(known);
  expect_valid_channel_prior(gamma);
  EXPECT_TRUE(std::holds_alternative<KnownDelayParams>(known.kind));
  EXPECT_TRUE(std::holds_alternative<GammaShapedParams>(gamma.kind));
}

TEST(ChannelPrior, RepairClipsNegativeEigenvalues) {
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(3, 3);
  c.diagonal() << 2.0, 1.0, -0.5;
  const auto p = make_channel_prior(c);
  EXPECT_EQ(p.clipped_eigenvalues, 1);
  expect_valid_channel_prior(p);
  Eigen::MatrixXcd bad = Eigen::MatrixXcd::Identity(2, 2);
  bad(0, 1) = {0.0, 1.0};
  EXPECT_THROW(make_channel_prior(bad), ValidationError);
  EXPECT_THROW(make_channel_prior(Eigen::MatrixXcd::Zero(2, 2)), NumericalError);
}

TEST(ChannelPrior, SpectralWeightingIsDiagonalCongruence) {
  RadarConfig cfg;
  cfg.num_freq = 4;
  cfg.freq_spacing = 1e8;
  Eigen::VectorXcd s(4);
  s << 1.0, cdouble(0.0, 2.0), 0.5, 0.0;
  const Eigen::MatrixXcd c = Eigen::MatrixXcd::Ones(4, 4);
  const Eigen::MatrixXcd w = spectral_weighting(c, cfg, s);
  for (Eigen::Index a = 0; a < 4; ++a)
    for (Eigen::Index b = 0; b < 4; ++b) {
      const cdouble da = s(a) * (cfg.frequency(a) + cfg.carrier) / cfg.carrier;
      const cdouble db = s(b) * (cfg.frequency(b) + cfg.carrier) / cfg.carrier;
      EXPECT_NEAR(std::abs(w(a, b) - da * std::conj(db)), 0.0, 1e-14);
    }
  EXPECT_EQ(w.row(3).cwiseAbs().sum(), 0.0);
}
