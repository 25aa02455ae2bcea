#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "breathdet/errors.hpp"
#include "breathdet/random.hpp"
#include "breathdet/signal.hpp"

using namespace breathdet;

namespace {

RadarConfig small_config(std::size_t k, std::size_t n, std::size_t m) {
  RadarConfig c;
  c.num_antennas = k;
  c.num_freq = n;
  c.num_reps = m;
  return c;
}

FrameSet random_frames(const RadarConfig& c, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  const Eigen::VectorXcd v = standard_complex_normal(static_cast<Eigen::Index>(c.total_size()), rng);
  return FrameSet(c, std::vector<cdouble>(v.data(), v.data() + v.size()));
}

}  // namespace

TEST(RadarConfig, FrequencyGridIsCentred) {
  RadarConfig c;
  const Eigen::VectorXd f = c.frequency_grid();
  EXPECT_DOUBLE_EQ(f(0), -f(f.size() - 1));
  EXPECT_DOUBLE_EQ(f(1) - f(0), c.freq_spacing);
  EXPECT_NEAR(f.sum(), 0.0, 1e-3);
}

TEST(RadarConfig, RejectsZeroDimensions) {
  EXPECT_THROW(small_config(0, 4, 4).validate(), ConfigError);
  EXPECT_THROW(small_config(1, 0, 4).validate(), ConfigError);
  RadarConfig c;
  c.rep_interval = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pulse, PassbandStopbandAndTaperMidpoint) {
  const PulseSpec spec;
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(0.0, spec), 1.0);
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(125e6, spec), 1.0);
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(-125e6, spec), 1.0);
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(375e6, spec), 0.0);
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(400e6, spec), 0.0);
  EXPECT_NEAR(raised_cosine_amplitude(250e6, spec), std::cos(std::numbers::pi / 4.0), 1e-15);
}

TEST(Pulse, ZeroRolloffIsRectangle) {
  PulseSpec spec;
  spec.rolloff = 0.0;
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(249e6, spec), 1.0);
  EXPECT_DOUBLE_EQ(raised_cosine_amplitude(251e6, spec), 0.0);
}

TEST(Pulse, SpecGridMatchesAmplitudes) {
  RadarConfig c;
  c.num_freq = 128;
  c.freq_spacing = 7.8125e6;
  const Eigen::VectorXcd s = synthesize_pulse(c, PulseSpec{});
  EXPECT_NEAR(s.squaredNorm(), 128.0, 1e-9);
  const double peak = s.cwiseAbs().maxCoeff();
  for (std::size_t n = 0; n < c.num_freq; ++n) {
    const double f = std::abs(c.frequency(n));
    const double a = std::abs(s(static_cast<Eigen::Index>(n))) / peak;
    if (f <= 125e6) EXPECT_NEAR(a, 1.0, 1e-12);
    if (f >= 375e6) EXPECT_EQ(a, 0.0);
  }
}

TEST(Pulse, TooWideForGridThrows) {
  RadarConfig c;
  c.num_freq = 16;
  EXPECT_THROW(synthesize_pulse(c, PulseSpec{}), ConfigError);
  PulseSpec bad;
  bad.rolloff = 1.5;
  EXPECT_THROW(synthesize_pulse(RadarConfig{}, bad), ConfigError);
}

TEST(FrameSet, IndexingIsRepetitionMajor) {
  const auto c = small_config(2, 3, 4);
  FrameSet f(c);
  f.at(1, 2, 0) = {7.0, 1.0};
  EXPECT_EQ(f.raw()[(2 * 2 + 1) * 3 + 0], cdouble(7.0, 1.0));
  EXPECT_THROW(f.at(2, 0, 0), ValidationError);
  EXPECT_THROW(f.at(0, 4, 0), ValidationError);
  EXPECT_THROW(FrameSet(c, std::vector<cdouble>(5)), ValidationError);
}

TEST(Clutter, ConstantFramesVanish) {
  const auto c = small_config(1, 1, 2);
  const auto s = remove_clutter(FrameSet(c, {{3.0, 0.0}, {3.0, 0.0}}));
  EXPECT_EQ(s.data(0), cdouble(0.0, 0.0));
  EXPECT_EQ(s.data(1), cdouble(0.0, 0.0));
}

TEST(Clutter, MeanIsSubtracted) {
  const auto c = small_config(1, 1, 2);
  const auto s = remove_clutter(FrameSet(c, {{1.0, 1.0}, {3.0, 1.0}}));
  EXPECT_EQ(s.data(0), cdouble(-1.0, 0.0));
  EXPECT_EQ(s.data(1), cdouble(1.0, 0.0));
}

TEST(Clutter, EverySlotSumsToZero) {
  const auto c = small_config(2, 2, 3);
  const auto frames = random_frames(c, 11);
  const auto s = remove_clutter(frames);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t n = 0; n < 2; ++n) {
      cdouble sum{}, mean{};
      for (std::size_t m = 0; m < 3; ++m) mean += frames.at(k, m, n) / 3.0;
      for (std::size_t m = 0; m < 3; ++m) {
        const cdouble v = s.data(static_cast<Eigen::Index>((m * 2 + k) * 2 + n));
        EXPECT_NEAR(std::abs(v - (frames.at(k, m, n) - mean)), 0.0, 1e-15);
        sum += v;
      }
      EXPECT_NEAR(std::abs(sum), 0.0, 1e-14);
    }
}

TEST(Clutter, IdempotentAndRejectsSingleRepetition) {
  const auto c = small_config(2, 3, 5);
  const auto s1 = remove_clutter(random_frames(c, 3));
  const auto s2 = remove_clutter(FrameSet(c, std::vector<cdouble>(s1.data.data(), s1.data.data() + s1.data.size())));
  EXPECT_LT((s1.data - s2.data).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(remove_clutter(FrameSet(small_config(1, 2, 1))), ValidationError);
}

TEST(Clutter, NonFiniteInputIsDataError) {
  const auto c = small_config(1, 1, 2);
  EXPECT_THROW(remove_clutter(FrameSet(c, {{NAN, 0.0}, {1.0, 0.0}})), DataError);
}

TEST(AntennaSlice, SingleAntennaIsFullVector) {
  const auto c = small_config(1, 3, 4);
  const auto s = remove_clutter(random_frames(c, 5));
  EXPECT_EQ(antenna_slice(s, 0), s.data);
}

TEST(AntennaSlice, SelectsAntennaEntries) {
  const auto c = small_config(2, 3, 4);
  StackedSignal s{c, Eigen::VectorXcd(static_cast<Eigen::Index>(c.total_size()))};
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t n = 0; n < 3; ++n) s.data(static_cast<Eigen::Index>((m * 2 + k) * 3 + n)) = double(k + 1);
  EXPECT_TRUE(antenna_slice(s, 0).isApprox(Eigen::VectorXcd::Constant(12, 1.0)));
  EXPECT_TRUE(antenna_slice(s, 1).isApprox(Eigen::VectorXcd::Constant(12, 2.0)));
  EXPECT_THROW(antenna_slice(s, 2), ValidationError);
}

TEST(AntennaSlice, EnergyPartitionsAndAssemblyInverts) {
  const auto c = small_config(3, 4, 5);
  const auto s = remove_clutter(random_frames(c, 9));
  double total = 0.0;
  std::vector<Eigen::VectorXcd> slices;
  for (std::size_t k = 0; k < 3; ++k) {
    slices.push_back(antenna_slice(s, k));
    total += slices.back().squaredNorm();
  }
  EXPECT_NEAR(total, s.energy(), 1e-12 * s.energy());
  EXPECT_EQ(assemble_slices(c, slices).data, s.data);
  const auto view = s.antenna_matrix(1);
  EXPECT_EQ(view(2, 3), s.data((3 * 3 + 1) * 4 + 2));
}
