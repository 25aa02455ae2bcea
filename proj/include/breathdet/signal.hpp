#pragma once

// Dimensioned radar types, transmit pulse synthesis, clutter removal and
// the mapping between the stacked signal and its per-antenna views.
//
// Stacking order everywhere in this library: repetition m outermost,
// antenna k in the middle, frequency bin n innermost, i.e. the sample
// (k, m, n) lives at flat index (m * K + k) * N + n.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "breathdet/errors.hpp"

namespace breathdet {

using cdouble = std::complex<double>;

struct RadarConfig {
  std::size_t num_antennas = 1;  // K
  std::size_t num_freq = 64;     // N
  std::size_t num_reps = 100;    // M
  double freq_spacing = 1e9 / 64.0;  // Hz
  double carrier = 6.5e9;             // Hz
  double rep_interval = 0.1;          // s
  double propagation_speed = 299792458.0;  // m/s

  void validate() const {
    if (num_antennas < 1 || num_freq < 1 || num_reps < 1)
      throw ConfigError("RadarConfig: K, N and M must be positive");
    if (!(freq_spacing > 0.0) || !(carrier > 0.0) || !(rep_interval > 0.0) ||
        !(propagation_speed > 0.0))
      throw ConfigError("RadarConfig: frequency spacing, carrier, repetition interval and "
                        "propagation speed must be positive");
  }

  std::size_t total_size() const { return num_antennas * num_freq * num_reps; }

  /// Baseband frequency of bin n, symmetric about the carrier.
  double frequency(std::size_t n) const {
    return (static_cast<double>(n) - 0.5 * static_cast<double>(num_freq - 1)) * freq_spacing;
  }

  Eigen::VectorXd frequency_grid() const {
    Eigen::VectorXd f(static_cast<Eigen::Index>(num_freq));
    for (std::size_t n = 0; n < num_freq; ++n) f(static_cast<Eigen::Index>(n)) = frequency(n);
    return f;
  }

  friend bool operator==(const RadarConfig&, const RadarConfig&) = default;
};

enum class PulseShape { RaisedCosineSpectrum };

struct PulseSpec {
  double bandwidth = 500e6;  // Hz
  double rolloff = 0.5;
  PulseShape shape = PulseShape::RaisedCosineSpectrum;

  void validate() const {
    if (!(bandwidth > 0.0)) throw ConfigError("PulseSpec: bandwidth must be positive");
    if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw ConfigError("PulseSpec: rolloff must lie in [0, 1]");
  }
};

/// Unnormalized spectral amplitude of the pulse at baseband frequency f.
/// Flat to (1 - beta) B / 2, cosine taper to zero at (1 + beta) B / 2, so the
/// power spectrum |s(f)|^2 has raised-cosine shape.
inline double raised_cosine_amplitude(double f, const PulseSpec& spec) {
  const double af = std::abs(f);
  const double inner = 0.5 * (1.0 - spec.rolloff) * spec.bandwidth;
  const double outer = 0.5 * (1.0 + spec.rolloff) * spec.bandwidth;
  if (af <= inner) return 1.0;
  if (af >= outer) return 0.0;
  const double width = spec.rolloff * spec.bandwidth;
  return std::cos(0.5 * std::numbers::pi * (af - inner) / width);
}

/// Samples the pulse spectrum on the configured grid, zero phase, with
/// sum |s_n|^2 = N.
inline Eigen::VectorXcd synthesize_pulse(const RadarConfig& config, const PulseSpec& spec) {
  config.validate();
  spec.validate();
  const double span = static_cast<double>(config.num_freq) * config.freq_spacing;
  if ((1.0 + spec.rolloff) * spec.bandwidth > span * (1.0 + 1e-12))
    throw ConfigError("synthesize_pulse: pulse support " +
                      std::to_string((1.0 + spec.rolloff) * spec.bandwidth) +
                      " Hz exceeds grid span " + std::to_string(span) + " Hz");

  const auto n = static_cast<Eigen::Index>(config.num_freq);
  Eigen::VectorXcd s(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s(i) = raised_cosine_amplitude(config.frequency(static_cast<std::size_t>(i)), spec);
  const double energy = s.squaredNorm();
  if (!(energy > 0.0)) throw ConfigError("synthesize_pulse: pulse has no energy on the grid");
  s *= std::sqrt(static_cast<double>(config.num_freq) / energy);
  return s;
}

/// Raw per-antenna, per-repetition baseband frames r_{k,m}.
/// Stored repetition-major (m, k, n), the same layout as the stacked vector.
class FrameSet {
public:
  FrameSet() = default;

  explicit FrameSet(RadarConfig config)
      : config_(std::move(config)), data_(config_.total_size(), cdouble{}) {
    config_.validate();
  }

  FrameSet(RadarConfig config, std::vector<cdouble> data) : config_(std::move(config)), data_(std::move(data)) {
    config_.validate();
    if (data_.size() != config_.total_size())
      throw ValidationError("FrameSet: expected " + std::to_string(config_.total_size()) +
                            " samples, got " + std::to_string(data_.size()));
  }

  const RadarConfig& config() const { return config_; }

  cdouble& at(std::size_t k, std::size_t m, std::size_t n) { return data_[index(k, m, n)]; }
  const cdouble& at(std::size_t k, std::size_t m, std::size_t n) const { return data_[index(k, m, n)]; }

  std::span<const cdouble> raw() const { return data_; }
  std::span<cdouble> raw() { return data_; }

  bool all_finite() const {
    for (const auto& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

private:
  std::size_t index(std::size_t k, std::size_t m, std::size_t n) const {
    if (k >= config_.num_antennas || m >= config_.num_reps || n >= config_.num_freq)
      throw ValidationError("FrameSet: index out of range");
    return (m * config_.num_antennas + k) * config_.num_freq + n;
  }

  RadarConfig config_;
  std::vector<cdouble> data_;
};

/// Clutter-removed stacked vector r~ of length K*N*M.
struct StackedSignal {
  RadarConfig config;
  Eigen::VectorXcd data;

  /// N x M view of antenna k; column m is r~_{k,m}.
  Eigen::Map<const Eigen::MatrixXcd, 0, Eigen::OuterStride<>> antenna_matrix(std::size_t k) const {
    if (k >= config.num_antennas) throw ValidationError("antenna index out of range");
    const auto n = static_cast<Eigen::Index>(config.num_freq);
    const auto m = static_cast<Eigen::Index>(config.num_reps);
    const auto stride = static_cast<Eigen::Index>(config.num_antennas * config.num_freq);
    return {data.data() + static_cast<Eigen::Index>(k) * n, n, m, Eigen::OuterStride<>(stride)};
  }

  double energy() const { return data.squaredNorm(); }
};

/// Subtracts the slow-time mean of every (k, n) slot.
inline StackedSignal remove_clutter(const FrameSet& frames) {
  const auto& cfg = frames.config();
  if (cfg.num_reps < 2) throw ValidationError("remove_clutter: need at least two repetitions");
  if (!frames.all_finite()) throw DataError("remove_clutter: non-finite samples in frames");

  const std::size_t slot = cfg.num_antennas * cfg.num_freq;
  const auto raw = frames.raw();
  std::vector<cdouble> mean(slot, cdouble{});
  for (std::size_t m = 0; m < cfg.num_reps; ++m)
    for (std::size_t i = 0; i < slot; ++i) mean[i] += raw[m * slot + i];
  const double inv_m = 1.0 / static_cast<double>(cfg.num_reps);
  for (auto& v : mean) v *= inv_m;

  StackedSignal out{cfg, Eigen::VectorXcd(static_cast<Eigen::Index>(raw.size()))};
  for (std::size_t m = 0; m < cfg.num_reps; ++m)
    for (std::size_t i = 0; i < slot; ++i)
      out.data(static_cast<Eigen::Index>(m * slot + i)) = raw[m * slot + i] - mean[i];
  return out;
}

/// r~_{Ak}: the N*M samples of antenna k, repetition-major (index m * N + n).
inline Eigen::VectorXcd antenna_slice(const StackedSignal& signal, std::size_t k) {
  const auto view = signal.antenna_matrix(k);
  Eigen::VectorXcd out(view.size());
  Eigen::Map<Eigen::MatrixXcd>(out.data(), view.rows(), view.cols()) = view;
  return out;
}

/// Inverse of antenna_slice over all antennas.
inline StackedSignal assemble_slices(const RadarConfig& config, std::span<const Eigen::VectorXcd> slices) {
  if (slices.size() != config.num_antennas) throw ValidationError("assemble_slices: wrong number of slices");
  const auto n = static_cast<Eigen::Index>(config.num_freq);
  const auto m = static_cast<Eigen::Index>(config.num_reps);
  StackedSignal out{config, Eigen::VectorXcd(static_cast<Eigen::Index>(config.total_size()))};
  const auto stride = static_cast<Eigen::Index>(config.num_antennas * config.num_freq);
  for (std::size_t k = 0; k < slices.size(); ++k) {
    if (slices[k].size() != n * m) throw ValidationError("assemble_slices: slice length mismatch");
    Eigen::Map<Eigen::MatrixXcd, 0, Eigen::OuterStride<>>(out.data.data() + static_cast<Eigen::Index>(k) * n, n,
                                                          m, Eigen::OuterStride<>(stride)) =
        Eigen::Map<const Eigen::MatrixXcd>(slices[k].data(), n, m);
  }
  return out;
}

}  // namespace breathdet
