#pragma once

// Well records, CSV I/O, z-score normalization, windowing, leave-one-out folds,
// the synthetic benchmark generator and the MSE metric.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "enlstm/error.hpp"
#include "enlstm/linalg.hpp"
#include "enlstm/perturb.hpp"
#include "enlstm/rng.hpp"

namespace enlstm {

// Depth-indexed multichannel log of one well. values is samples x channels.
struct WellRecord {
  std::string well_id;
  std::vector<double> depth;
  std::vector<std::string> channels;
  Matrix values;

  std::size_t size() const { return depth.size(); }

  std::optional<std::size_t> channel_index(std::string_view name) const {
    for (std::size_t c = 0; c < channels.size(); ++c)
      if (channels[c] == name) return c;
    return std::nullopt;
  }

  std::size_t require_channel(std::string_view name) const {
    if (auto c = channel_index(name)) return *c;
    throw InvalidArgument("well '" + well_id + "' has no channel '" + std::string(name) + "'");
  }

  // samples x names.size() block of the named channels.
  Matrix columns(const std::vector<std::string>& names) const {
    Matrix out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k)
      out.col(static_cast<Eigen::Index>(k)) = values.col(static_cast<Eigen::Index>(require_channel(names[k])));
    return out;
  }

  void validate() const {
    detail::require(!depth.empty(), "well '" + well_id + "': empty record");
    detail::require(values.rows() == static_cast<Eigen::Index>(depth.size()) &&
                        values.cols() == static_cast<Eigen::Index>(channels.size()),
                    "well '" + well_id + "': value matrix shape does not match depth/channels");
    for (std::size_t i = 1; i < depth.size(); ++i)
      detail::require(depth[i] > depth[i - 1], "well '" + well_id + "': depth not strictly increasing");
  }
};

// True when consecutive depth steps agree with their median within `rel_tol`.
inline bool uniform_spacing(const WellRecord& r, double rel_tol = 1e-3) {
  if (r.size() < 3) return true;
  std::vector<double> steps;
  for (std::size_t i = 1; i < r.size(); ++i) steps.push_back(r.depth[i] - r.depth[i - 1]);
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  return std::all_of(steps.begin(), steps.end(), [&](double s) { return std::abs(s - med) <= rel_tol * med; });
}

// ---------------------------------------------------------------------------
// CSV

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;  // rows with a missing value
  std::vector<std::string> irregular_spacing;  // wells whose depth step is not uniform
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) {
  if (s.empty()) return true;
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return lower == "na" || lower == "nan" || lower == "null";
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Parses CSV text: a header naming `well_id`, `depth` and the channels, then one
// row per depth sample. Rows are grouped into records by well_id in order of
// first appearance. Rows with an empty/NA/NaN cell are dropped and counted.
inline std::vector<WellRecord> parse_csv(std::istream& in, LoadReport* report = nullptr,
                                         const std::string& source = "<csv>") {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(source + ": " + msg + " at line " + std::to_string(line_no));
  };

  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto cell : detail::split_csv_line(line)) header.emplace_back(detail::trim(cell));

  std::optional<std::size_t> id_col;
  std::optional<std::size_t> depth_col;
  std::vector<std::size_t> channel_cols;
  std::vector<std::string> channel_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "well_id") id_col = c;
    else if (header[c] == "depth") depth_col = c;
    else {
      if (header[c].empty()) throw fail("empty column name in header");
      if (std::find(channel_names.begin(), channel_names.end(), header[c]) != channel_names.end())
        throw fail("duplicate column '" + header[c] + "'");
      channel_cols.push_back(c);
      channel_names.push_back(header[c]);
    }
  }
  if (!id_col) throw fail("missing column 'well_id'");
  if (!depth_col) throw fail("missing column 'depth'");

  struct Building {
    WellRecord record;
    std::vector<std::vector<double>> rows;
  };
  std::vector<Building> wells;
  std::map<std::string, std::size_t, std::less<>> index;
  LoadReport local;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw fail("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    ++local.rows_read;
    const std::string id(detail::trim(cells[*id_col]));
    if (id.empty()) throw fail("empty well_id");

    bool missing = false;
    std::vector<double> row;
    row.reserve(channel_cols.size() + 1);
    for (std::size_t c : std::vector<std::size_t>{*depth_col}) {
      const auto cell = detail::trim(cells[c]);
      if (detail::is_missing(cell)) throw fail("missing depth");
      auto v = detail::parse_double(cell);
      if (!v) throw fail("non-numeric value '" + std::string(cell) + "' in column 'depth'");
      row.push_back(*v);
    }
    for (std::size_t k = 0; k < channel_cols.size(); ++k) {
      const auto cell = detail::trim(cells[channel_cols[k]]);
      if (detail::is_missing(cell)) {
        missing = true;
        continue;
      }
      auto v = detail::parse_double(cell);
      if (!v) throw fail("non-numeric value '" + std::string(cell) + "' in column '" + channel_names[k] + "'");
      row.push_back(*v);
    }
    if (missing) {
      ++local.rows_rejected;
      continue;
    }

    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, wells.size()).first;
      wells.push_back(Building{});
      wells.back().record.well_id = id;
      wells.back().record.channels = channel_names;
    }
    Building& w = wells[it->second];
    if (!w.record.depth.empty() && !(row[0] > w.record.depth.back()))
      throw ParseError(source + ": non-monotone depth at line " + std::to_string(line_no));
    w.record.depth.push_back(row[0]);
    w.rows.emplace_back(row.begin() + 1, row.end());
  }

  std::vector<WellRecord> out;
  for (auto& w : wells) {
    const auto n = static_cast<Eigen::Index>(w.rows.size());
    w.record.values.resize(n, static_cast<Eigen::Index>(channel_names.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t c = 0; c < channel_names.size(); ++c) w.record.values(i, static_cast<Eigen::Index>(c)) = w.rows[i][c];
    if (!uniform_spacing(w.record)) local.irregular_spacing.push_back(w.record.well_id);
    out.push_back(std::move(w.record));
  }
  if (report != nullptr) *report = local;
  return out;
}

inline std::vector<WellRecord> load_csv(const std::filesystem::path& path, LoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return parse_csv(in, report, path.string());
}

// Writes records with shortest round-trip number formatting. All records must
// share one channel list.
inline void write_csv(std::ostream& out, const std::vector<WellRecord>& records) {
  detail::require(!records.empty(), "write_csv: no records");
  const auto& channels = records.front().channels;
  out << "well_id,depth";
  for (const auto& c : channels) out << ',' << c;
  out << '\n';
  for (const auto& r : records) {
    detail::require(r.channels == channels, "write_csv: records disagree on channels");
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << r.well_id << ',' << detail::format_double(r.depth[i]);
      for (std::size_t c = 0; c < channels.size(); ++c)
        out << ',' << detail::format_double(r.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
      out << '\n';
    }
  }
}

inline void write_csv(const std::filesystem::path& path, const std::vector<WellRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_csv(out, records);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Normalization

// Per-channel (mu, sigma) on the real-world scale.
struct ChannelStats {
  std::vector<std::string> names;
  std::vector<ChannelScale> scales;

  const ChannelScale& at(std::string_view name) const {
    for (std::size_t c = 0; c < names.size(); ++c)
      if (names[c] == name) return scales[c];
    throw InvalidArgument("no statistics for channel '" + std::string(name) + "'");
  }
  std::vector<ChannelScale> select(const std::vector<std::string>& channels) const {
    std::vector<ChannelScale> out;
    for (const auto& c : channels) out.push_back(at(c));
    return out;
  }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

inline double normalize(double x, const ChannelScale& s) { return (x - s.mean) / s.stddev; }
inline double denormalize(double z, const ChannelScale& s) { return z * s.stddev + s.mean; }

// Population (divide-by-N) mean and standard deviation over all samples of the
// given records.
inline ChannelStats zscore_fit(std::span<const WellRecord> records, const std::vector<std::string>& channels) {
  ChannelStats stats;
  for (const auto& name : channels) {
    long double sum = 0.0L;
    std::size_t n = 0;
    for (const auto& r : records) {
      const auto c = static_cast<Eigen::Index>(r.require_channel(name));
      for (Eigen::Index i = 0; i < r.values.rows(); ++i) sum += r.values(i, c);
      n += r.size();
    }
    if (n < 2) throw InvalidArgument("zscore_fit: channel '" + name + "' needs at least 2 samples");
    const long double mean = sum / n;
    long double ss = 0.0L;
    for (const auto& r : records) {
      const auto c = static_cast<Eigen::Index>(r.require_channel(name));
      for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
        const long double d = r.values(i, c) - mean;
        ss += d * d;
      }
    }
    const double sd = static_cast<double>(std::sqrt(ss / n));
    if (!(sd > 1e-12 * (1.0 + std::abs(static_cast<double>(mean)))))
      throw InvalidArgument("degenerate channel '" + name + "'");
    stats.names.push_back(name);
    stats.scales.push_back(ChannelScale{static_cast<double>(mean), sd});
  }
  return stats;
}

// Applies (x - mu) / sigma to every channel that has statistics; other
// channels pass through unchanged.
inline WellRecord zscore_apply(const WellRecord& record, const ChannelStats& stats) {
  WellRecord out = record;
  for (std::size_t k = 0; k < stats.names.size(); ++k) {
    if (auto c = record.channel_index(stats.names[k])) {
      auto col = out.values.col(static_cast<Eigen::Index>(*c));
      col = (col.array() - stats.scales[k].mean) / stats.scales[k].stddev;
    }
  }
  return out;
}

inline WellRecord zscore_invert(const WellRecord& record, const ChannelStats& stats) {
  WellRecord out = record;
  for (std::size_t k = 0; k < stats.names.size(); ++k) {
    if (auto c = record.channel_index(stats.names[k])) {
      auto col = out.values.col(static_cast<Eigen::Index>(*c));
      col = col.array() * stats.scales[k].stddev + stats.scales[k].mean;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

struct Window {
  std::string well_id;
  std::size_t record = 0;  // index of the source series in the caller's list
  std::size_t start = 0;
  Matrix inputs;   // L x n_in
  Matrix targets;  // L x n_out
};

struct WindowedBatch {
  std::size_t length = 0;
  std::vector<Window> windows;
  std::size_t short_series = 0;  // series too short to yield a window

  std::size_t n_inputs() const { return windows.empty() ? 0 : static_cast<std::size_t>(windows[0].inputs.cols()); }
  std::size_t n_targets() const { return windows.empty() ? 0 : static_cast<std::size_t>(windows[0].targets.cols()); }

  void append(WindowedBatch other) {
    detail::require(windows.empty() || other.windows.empty() || other.length == length,
                    "window: cannot merge batches with different lengths");
    if (windows.empty()) length = other.length;
    for (auto& w : other.windows) windows.push_back(std::move(w));
    short_series += other.short_series;
  }
};

// Window start indices 0, stride, 2*stride, ... with start + length <= n.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t length, std::size_t stride) {
  detail::require(length >= 1, "window: length must be >= 1");
  detail::require(stride >= 1, "window: stride must be >= 1");
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + length <= n; s += stride) starts.push_back(s);
  return starts;
}

// Slices fixed-length windows from already-separated input/target blocks.
inline WindowedBatch window(const Matrix& inputs, const Matrix& targets, std::size_t length, std::size_t stride,
                            std::size_t record_index = 0, const std::string& well_id = {}) {
  detail::require(inputs.rows() == targets.rows(), "window: inputs and targets differ in length");
  WindowedBatch out;
  out.length = length;
  const auto starts = window_starts(static_cast<std::size_t>(inputs.rows()), length, stride);
  if (starts.empty()) out.short_series = 1;
  const auto L = static_cast<Eigen::Index>(length);
  for (std::size_t s : starts) {
    const auto i = static_cast<Eigen::Index>(s);
    out.windows.push_back(Window{well_id, record_index, s, inputs.middleRows(i, L), targets.middleRows(i, L)});
  }
  return out;
}

inline WindowedBatch window(const WellRecord& record, const std::vector<std::string>& inputs,
                            const std::vector<std::string>& targets, std::size_t length, std::size_t stride,
                            std::size_t record_index = 0) {
  return window(record.columns(inputs), record.columns(targets), length, stride, record_index, record.well_id);
}

// ---------------------------------------------------------------------------
// Leave-one-out

struct Fold {
  std::vector<std::size_t> train;
  std::size_t test = 0;
};

// One fold per well, ordered by well_id; every other well trains.
inline std::vector<Fold> loo_splits(const std::vector<WellRecord>& records) {
  if (records.size() < 2) throw InvalidArgument("leave-one-out needs at least 2 wells");
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].well_id < records[b].well_id; });
  std::vector<Fold> folds;
  for (std::size_t test : order) {
    Fold f;
    f.test = test;
    for (std::size_t i : order)
      if (i != test) f.train.push_back(i);
    folds.push_back(std::move(f));
  }
  return folds;
}

inline std::vector<WellRecord> select(const std::vector<WellRecord>& records, const std::vector<std::size_t>& idx) {
  std::vector<WellRecord> out;
  for (std::size_t i : idx) out.push_back(records.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
//
// Inputs x_i(t), i < n_in, per well:
//   latent z_i(t) = sum_{k<3} a_ik sin(2 pi t / P_ik + phi_ik) + u_i(t)
//   u_i(t) = 0.9 u_i(t-1) + 0.3 sqrt(1 - 0.81) e(t),  e ~ N(0, 1)
//   a_ik ~ U(0.3, 0.8), P_ik ~ U(15, 120) samples, phi_ik ~ U(0, 2 pi)
//   written value x_i = in_offset_i + in_scale_i * z_i
// Targets y_k(t), k < n_out, shared mapping across wells:
//   s_k(t) = sum_i sum_{lag in lags} w_{k,i,lag} z_i(max(t - lag, 0))
//   y_k(t) = out_offset_k + out_scale_k * (tanh(s_k(t)) + noise * e(t))
// Weights w ~ N(0, 1) scaled by 1.2 / sqrt(n_in * n_lags), so s_k has roughly unit
// spread; the mapping depends on the seed only, never on the well.
// Depth starts at 1000 m + 50 m * well and steps 0.1 m.

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_wells = 6;
  std::size_t length = 800;
  std::size_t n_in = 4;
  std::size_t n_out = 3;
  double noise = 0.05;
  std::vector<std::size_t> lags{0, 5, 20};
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

// The deterministic part of the generator: offsets, scales and lag weights.
struct SynthModel {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::vector<std::size_t> lags;
  std::vector<double> in_offset, in_scale, out_offset, out_scale;
  std::vector<double> weights;  // index (k * n_in + i) * lags.size() + lag_index

  static SynthModel from_spec(const SynthSpec& spec) {
    SynthModel m;
    m.n_in = spec.n_in;
    m.n_out = spec.n_out;
    m.lags = spec.lags;
    Engine eng = make_engine(spec.seed, {0x5e1f});
    std::uniform_real_distribution<double> off(-2.0, 6.0);
    std::uniform_real_distribution<double> scl(0.5, 3.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < spec.n_in; ++i) {
      m.in_offset.push_back(off(eng));
      m.in_scale.push_back(scl(eng));
    }
    for (std::size_t k = 0; k < spec.n_out; ++k) {
      m.out_offset.push_back(off(eng) + 4.0);
      m.out_scale.push_back(scl(eng));
    }
    const double w_scale = 1.2 / std::sqrt(static_cast<double>(spec.lags.size() * spec.n_in));
    for (std::size_t n = 0; n < spec.n_out * spec.n_in * spec.lags.size(); ++n) m.weights.push_back(w_scale * normal(eng));
    return m;
  }

  double weight(std::size_t k, std::size_t i, std::size_t lag_index) const {
    return weights[(k * n_in + i) * lags.size() + lag_index];
  }

  // Noise-free target in real units from real-unit inputs (samples x n_in).
  double clean_target(const Matrix& inputs, std::size_t k, std::size_t t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_in; ++i) {
      for (std::size_t l = 0; l < lags.size(); ++l) {
        const std::size_t src = t >= lags[l] ? t - lags[l] : 0;
        const double z = (inputs(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(i)) - in_offset[i]) / in_scale[i];
        s += weight(k, i, l) * z;
      }
    }
    return out_offset[k] + out_scale[k] * std::tanh(s);
  }
};

inline std::vector<std::string> synth_input_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("x" + std::to_string(i));
  return out;
}
inline std::vector<std::string> synth_target_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("y" + std::to_string(i));
  return out;
}

inline std::vector<WellRecord> synth_generate(const SynthSpec& spec) {
  detail::require(spec.n_wells >= 1 && spec.length >= 1 && spec.n_in >= 1 && spec.n_out >= 1,
                  "synth: all counts must be >= 1");
  detail::require(spec.noise >= 0.0, "synth: noise must be >= 0");
  detail::require(!spec.lags.empty(), "synth: at least one lag required");
  const SynthModel model = SynthModel::from_spec(spec);
  const auto T = static_cast<Eigen::Index>(spec.length);
  std::vector<WellRecord> wells;
  for (std::size_t w = 0; w < spec.n_wells; ++w) {
    Engine eng = make_engine(spec.seed, {0x3e11, w});
    std::uniform_real_distribution<double> amp(0.3, 0.8);
    std::uniform_real_distribution<double> period(15.0, 120.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> normal(0.0, 1.0);

    WellRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "W%02zu", w + 1);
    r.well_id = id;
    r.channels = synth_input_names(spec.n_in);
    const auto targets = synth_target_names(spec.n_out);
    r.channels.insert(r.channels.end(), targets.begin(), targets.end());
    r.values.resize(T, static_cast<Eigen::Index>(spec.n_in + spec.n_out));
    for (Eigen::Index t = 0; t < T; ++t) r.depth.push_back(1000.0 + 50.0 * static_cast<double>(w) + 0.1 * static_cast<double>(t));

    const double innov = 0.3 * std::sqrt(1.0 - 0.81);
    for (std::size_t i = 0; i < spec.n_in; ++i) {
      double a[3], p[3], ph[3];
      for (int k = 0; k < 3; ++k) {
        a[k] = amp(eng);
        p[k] = period(eng);
        ph[k] = phase(eng);
      }
      double u = 0.3 * normal(eng);
      for (Eigen::Index t = 0; t < T; ++t) {
        if (t > 0) u = 0.9 * u + innov * normal(eng);
        double z = u;
        for (int k = 0; k < 3; ++k) z += a[k] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / p[k] + ph[k]);
        r.values(t, static_cast<Eigen::Index>(i)) = model.in_offset[i] + model.in_scale[i] * z;
      }
    }
    const Matrix inputs = r.values.leftCols(static_cast<Eigen::Index>(spec.n_in));
    for (std::size_t k = 0; k < spec.n_out; ++k) {
      for (Eigen::Index t = 0; t < T; ++t) {
        const double clean = model.clean_target(inputs, k, static_cast<std::size_t>(t));
        r.values(t, static_cast<Eigen::Index>(spec.n_in + k)) =
            clean + model.out_scale[k] * spec.noise * normal(eng);
      }
    }
    wells.push_back(std::move(r));
  }
  return wells;
}

// ---------------------------------------------------------------------------
// Metric

inline double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InvalidArgument("mse: length mismatch");
  detail::require(!pred.empty(), "mse: empty series");
  long double s = 0.0L;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const long double d = static_cast<long double>(pred[i]) - truth[i];
    s += d * d;
  }
  return static_cast<double>(s / pred.size());
}

inline double mse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw InvalidArgument("mse: shape mismatch");
  return mse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
             std::span<const double>(truth.data(), static_cast<std::size_t>(truth.size())));
}

}  // namespace enlstm
