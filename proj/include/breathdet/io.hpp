#pragma once

// File formats: measurement files (JSON header line + little-endian float64
// payload), threshold tables, detection curves, matrices and VMP states.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "breathdet/detectors.hpp"
#include "breathdet/errors.hpp"
#include "breathdet/signal.hpp"
#include "breathdet/vmp.hpp"

namespace breathdet {

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(buf, 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  std::uint64_t u;
  if (!get_u64(is, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

/// Decimal with 12 significant digits.
inline std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Measurement files

struct MeasurementHeader {
  int schema_version = 1;
  std::size_t num_antennas = 1;
  std::size_t num_freq = 64;
  std::size_t total_reps = 0;
  double freq_spacing = 1e9 / 64.0;
  double carrier = 6.5e9;
  double rep_interval = 0.1;
  std::string device_note;
  std::optional<bool> occupied;  // ground-truth label, when known

  std::size_t payload_bytes() const { return num_antennas * total_reps * num_freq * 16; }

  RadarConfig window_config(std::size_t reps) const {
    RadarConfig c;
    c.num_antennas = num_antennas;
    c.num_freq = num_freq;
    c.num_reps = reps;
    c.freq_spacing = freq_spacing;
    c.carrier = carrier;
    c.rep_interval = rep_interval;
    return c;
  }
};

/// Header plus samples in (m, k, n) order.
struct MeasurementRecord {
  MeasurementHeader header;
  std::vector<cdouble> samples;
};

inline constexpr std::size_t kMaxHeaderBytes = 1 << 20;
inline constexpr std::size_t kMaxPayloadSamples = std::size_t{1} << 31;

inline void write_measurement(std::ostream& os, const MeasurementRecord& rec) {
  const auto& h = rec.header;
  if (rec.samples.size() != h.num_antennas * h.total_reps * h.num_freq)
    throw ValidationError("write_measurement: sample count does not match header");
  nlohmann::json j = {{"schema_version", h.schema_version}, {"K", h.num_antennas},      {"N", h.num_freq},
                      {"M_total", h.total_reps},           {"delta_f", h.freq_spacing}, {"f_c", h.carrier},
                      {"T_rep", h.rep_interval},           {"device_note", h.device_note}};
  if (h.occupied) j["occupied"] = *h.occupied;
  const std::string line = j.dump();
  os.write(line.data(), static_cast<std::streamsize>(line.size()));
  os.put('\n');
  for (const auto& v : rec.samples) {
    detail::put_f64(os, v.real());
    detail::put_f64(os, v.imag());
  }
  if (!os) throw DataError("write_measurement: write failed");
}

inline void write_measurement(const std::string& path, const MeasurementRecord& rec) {
  auto os = detail::open_out(path, std::ios::out | std::ios::binary);
  write_measurement(os, rec);
}

inline MeasurementRecord read_measurement(std::istream& is) {
  std::string line;
  std::size_t pos = 0;
  for (char c; is.get(c);) {
    if (c == '\n') break;
    line.push_back(c);
    if (++pos > kMaxHeaderBytes) throw ParseError("measurement header exceeds size limit", pos);
  }
  if (!is) throw ParseError("measurement header is not terminated by a newline", pos);
  const std::size_t header_end = line.size() + 1;

  MeasurementRecord rec;
  auto& h = rec.header;
  try {
    const auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ParseError("measurement header is not a JSON object", 0);
    h.schema_version = j.at("schema_version").get<int>();
    if (h.schema_version != 1) throw ParseError("unsupported schema version " + std::to_string(h.schema_version), 0);
    auto count = [&](const char* key) {
      const auto& v = j.at(key);
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
        throw ParseError(std::string("header field '") + key + "' must be a positive integer", 0);
      return static_cast<std::size_t>(v.get<std::uint64_t>());
    };
    auto positive = [&](const char* key) {
      const double v = j.at(key).get<double>();
      if (!(v > 0.0) || !std::isfinite(v))
        throw ParseError(std::string("header field '") + key + "' must be positive and finite", 0);
      return v;
    };
    h.num_antennas = count("K");
    h.num_freq = count("N");
    h.total_reps = count("M_total");
    h.freq_spacing = positive("delta_f");
    h.carrier = positive("f_c");
    h.rep_interval = positive("T_rep");
    if (j.contains("device_note")) h.device_note = j.at("device_note").get<std::string>();
    if (j.contains("occupied")) h.occupied = j.at("occupied").get<bool>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed measurement header: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid measurement header: ") + e.what(), 0);
  }

  const long double total = static_cast<long double>(h.num_antennas) * h.total_reps * h.num_freq;
  if (total > static_cast<long double>(kMaxPayloadSamples)) throw ParseError("declared payload is too large", header_end);
  const auto n = static_cast<std::size_t>(total);
  rec.samples.reserve(std::min<std::size_t>(n, std::size_t{1} << 20));
  for (std::size_t i = 0; i < n; ++i) {
    double re, im;
    if (!detail::get_f64(is, re) || !detail::get_f64(is, im))
      throw ParseError("truncated payload: expected " + std::to_string(h.payload_bytes()) + " bytes",
                       header_end + 16 * i);
    if (!std::isfinite(re) || !std::isfinite(im))
      throw ParseError("non-finite sample in payload", header_end + 16 * i);
    rec.samples.emplace_back(re, im);
  }
  return rec;
}

inline MeasurementRecord read_measurement(const std::string& path) {
  auto is = detail::open_in(path, std::ios::in | std::ios::binary);
  try {
    return read_measurement(is);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.message(), e.offset());
  }
}

/// Window length in repetitions for a given duration.
inline std::size_t window_length(double rep_interval, double window_seconds) {
  return static_cast<std::size_t>(std::llround(window_seconds / rep_interval));
}

/// Splits the record into non-overlapping windows of round(window_seconds / T_rep)
/// repetitions; a trailing partial window is discarded.
inline std::vector<FrameSet> ingest(const MeasurementRecord& rec, double window_seconds = 10.0) {
  const auto& h = rec.header;
  const std::size_t m = window_length(h.rep_interval, window_seconds);
  if (m < 1) throw ConfigError("ingest: window shorter than one repetition");
  const std::size_t slot = h.num_antennas * h.num_freq;
  std::vector<FrameSet> out;
  for (std::size_t w = 0; (w + 1) * m <= h.total_reps; ++w) {
    const auto first = rec.samples.begin() + static_cast<std::ptrdiff_t>(w * m * slot);
    out.emplace_back(h.window_config(m), std::vector<cdouble>(first, first + static_cast<std::ptrdiff_t>(m * slot)));
  }
  return out;
}

/// Packs frames into a record (inverse of ingest for a single window).
inline MeasurementRecord to_record(const FrameSet& frames, std::string device_note = {},
                                   std::optional<bool> occupied = std::nullopt) {
  const auto& c = frames.config();
  MeasurementRecord rec;
  rec.header.num_antennas = c.num_antennas;
  rec.header.num_freq = c.num_freq;
  rec.header.total_reps = c.num_reps;
  rec.header.freq_spacing = c.freq_spacing;
  rec.header.carrier = c.carrier;
  rec.header.rep_interval = c.rep_interval;
  rec.header.device_note = std::move(device_note);
  rec.header.occupied = occupied;
  rec.samples.assign(frames.raw().begin(), frames.raw().end());
  return rec;
}

// ---------------------------------------------------------------------------
// Threshold tables

inline void write_thresholds(std::ostream& os, const ThresholdTable& table) {
  os << "detector,snr_db,gamma,p_fa,n_trials\n";
  for (const auto& e : table.entries)
    os << to_string(e.detector) << ',' << detail::fmt12(e.snr_db) << ',' << detail::fmt12(e.gamma) << ','
       << detail::fmt12(table.target_pfa) << ',' << table.trials << '\n';
}

inline ThresholdTable read_thresholds(std::istream& is) {
  ThresholdTable table;
  std::string line;
  if (!std::getline(is, line) || line != "detector,snr_db,gamma,p_fa,n_trials")
    throw ParseError("threshold table: unexpected header", 0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) throw ParseError("threshold table: expected 5 columns on line " + std::to_string(lineno), 0);
    try {
      table.entries.push_back({parse_detector(cells[0]), std::stod(cells[1]), std::stod(cells[2])});
      table.target_pfa = std::stod(cells[3]);
      table.trials = static_cast<std::size_t>(std::stoull(cells[4]));
    } catch (const std::logic_error&) {
      throw ParseError("threshold table: bad number on line " + std::to_string(lineno), 0);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Matrices and VMP states: dimensions as u64 LE, then row-major interleaved doubles.

inline void write_matrix(std::ostream& os, const Eigen::MatrixXcd& m) {
  detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      detail::put_f64(os, m(r, c).real());
      detail::put_f64(os, m(r, c).imag());
    }
}

inline Eigen::MatrixXcd read_matrix(std::istream& is) {
  std::uint64_t rows, cols;
  if (!detail::get_u64(is, rows) || !detail::get_u64(is, cols)) throw DataError("read_matrix: truncated dimensions");
  if (rows > (1u << 20) || cols > (1u << 20) || rows * cols > (1u << 26)) throw DataError("read_matrix: implausible size");
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double re, im;
      if (!detail::get_f64(is, re) || !detail::get_f64(is, im)) throw DataError("read_matrix: truncated data");
      m(r, c) = {re, im};
    }
  return m;
}

inline void write_vmp_state(std::ostream& os, const VmpState& s) {
  write_matrix(os, s.b_hat.cast<cdouble>());
  write_matrix(os, s.cb_hat.cast<cdouble>());
  detail::put_u64(os, s.h_rot.size());
  for (std::size_t k = 0; k < s.h_rot.size(); ++k) {
    write_matrix(os, s.h_rot[k]);
    write_matrix(os, s.ch_eig[k].cast<cdouble>());
  }
  detail::put_f64(os, s.lambda_hat);
  write_matrix(os, Eigen::Map<const Eigen::VectorXd>(s.elbo_trace.data(), static_cast<Eigen::Index>(s.elbo_trace.size()))
                       .cast<cdouble>());
  detail::put_u64(os, static_cast<std::uint64_t>(s.iterations));
  detail::put_u64(os, (s.converged ? 1u : 0u) | (s.flagged ? 2u : 0u));
}

inline VmpState read_vmp_state(std::istream& is, const VmpModel& model) {
  VmpState s;
  s.b_hat = read_matrix(is).real();
  s.cb_hat = read_matrix(is).real();
  std::uint64_t k;
  if (!detail::get_u64(is, k) || k > 4096) throw DataError("read_vmp_state: bad antenna count");
  for (std::uint64_t i = 0; i < k; ++i) {
    s.h_rot.emplace_back(read_matrix(is));
    s.ch_eig.emplace_back(read_matrix(is).real());
  }
  std::uint64_t iters, flags;
  if (!detail::get_f64(is, s.lambda_hat)) throw DataError("read_vmp_state: truncated");
  const Eigen::VectorXd trace = read_matrix(is).real();
  s.elbo_trace.assign(trace.data(), trace.data() + trace.size());
  if (!detail::get_u64(is, iters) || !detail::get_u64(is, flags)) throw DataError("read_vmp_state: truncated");
  s.iterations = static_cast<int>(iters);
  s.converged = flags & 1u;
  s.flagged = flags & 2u;
  if (s.h_rot.size() == model.channels.size()) s.sync_channels(model);
  return s;
}

inline void write_elbo_trace_csv(std::ostream& os, const VmpState& s) {
  os << "iteration,elbo\n";
  for (std::size_t i = 0; i < s.elbo_trace.size(); ++i) os << i + 1 << ',' << detail::fmt12(s.elbo_trace[i]) << '\n';
}

inline void write_breathing_csv(std::ostream& os, const Eigen::VectorXd& trace, double rep_interval) {
  os << "m,time_s,breathing\n";
  for (Eigen::Index m = 0; m < trace.size(); ++m)
    os << m << ',' << detail::fmt12(static_cast<double>(m) * rep_interval) << ',' << detail::fmt12(trace(m)) << '\n';
}

}  // namespace breathdet
