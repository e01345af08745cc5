#pragma once

// The four commands behind the command-line tool. Each writes its artifacts
// into an output directory and logs progress to a stream.
//
//   synth     synth.csv
//   train     stats.json, stage<k>.ckpt, metrics_stage<k>.csv, lambda_trace_stage<k>.csv
//   eval-loo  loo_results.csv (repeat, fold, well, epoch, target, mse), summary.json
//   predict   predictions_<well>.csv (depth, then <target>, <target>_std per target)
//
// Every command also writes config.json, the resolved configuration.
// Metrics are on the normalized scale; predictions are de-normalized.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "enlstm/cascade.hpp"
#include "enlstm/checkpoint.hpp"
#include "enlstm/config.hpp"
#include "enlstm/data.hpp"
#include "enlstm/enrml.hpp"
#include "enlstm/error.hpp"

namespace enlstm {

namespace fs = std::filesystem;

// Per-run settings that never change results.
struct RunOptions {
  fs::path out;
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void echo_config(const ExperimentConfig& c, const fs::path& dir) {
  auto out = open_out(dir / "config.json");
  out << to_json(c).dump(2) << "\n";
}

inline std::ostream& logger(const RunOptions& o) {
  static std::ostream null(nullptr);
  return o.log ? *o.log : null;
}

inline ExperimentConfig with_threads(ExperimentConfig c, std::size_t threads) {
  c.train.threads = std::max<std::size_t>(threads, 1);
  return c;
}

inline std::string seconds(double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << s << " s";
  return os.str();
}

inline double median(std::vector<double> v) {
  detail::require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  detail::require(!v.empty(), "mean of an empty set");
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

}  // namespace detail

inline Json stats_to_json(const ChannelStats& s) {
  Json arr = Json::array();
  for (std::size_t k = 0; k < s.names.size(); ++k)
    arr.push_back({{"name", s.names[k]}, {"mean", s.scales[k].mean}, {"stddev", s.scales[k].stddev}});
  return {{"channels", arr}};
}

inline ChannelStats stats_from_json(const Json& j) {
  ChannelStats s;
  try {
    for (const auto& c : j.at("channels")) {
      s.names.push_back(c.at("name").get<std::string>());
      s.scales.push_back(ChannelScale{c.at("mean").get<double>(), c.at("stddev").get<double>()});
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("stats: ") + e.what());
  }
  return s;
}

// The wells a config refers to: generated on the fly or read from csv.
inline std::vector<WellRecord> load_wells(const ExperimentConfig& c) {
  if (c.synthetic()) return synth_generate(c.synth);
  return load_csv(c.csv);
}

inline CascadePlan plan_for(const ExperimentConfig& c) { return build_plan(c.inputs, c.targets, c.network); }

inline std::vector<std::string> all_channels(const ExperimentConfig& c) {
  std::vector<std::string> out = c.inputs;
  out.insert(out.end(), c.targets.begin(), c.targets.end());
  return out;
}

// ---------------------------------------------------------------------------
// synth

inline fs::path cmd_synth(const ExperimentConfig& c, const RunOptions& o) {
  detail::require(c.synthetic(), "synth: the config names a csv file, not synthetic data");
  detail::prepare_dir(o.out);
  const auto wells = synth_generate(c.synth);
  const fs::path path = o.out / "synth.csv";
  write_csv(path, wells);
  detail::echo_config(c, o.out);
  std::size_t rows = 0;
  for (const auto& w : wells) rows += w.size();
  detail::logger(o) << "wrote " << path.string() << ": " << wells.size() << " wells, " << rows << " rows\n";
  return path;
}

// ---------------------------------------------------------------------------
// train

inline void write_metrics(const fs::path& path, const std::vector<EpochMetrics>& m) {
  auto out = detail::open_out(path);
  out << "epoch,mismatch,spread,lambda,batches,accepted,rejected\n";
  for (const auto& e : m)
    out << e.epoch << ',' << detail::format_double(e.mismatch) << ',' << detail::format_double(e.spread) << ','
        << detail::format_double(e.lambda) << ',' << e.batches << ',' << e.accepted << ',' << e.rejected << '\n';
}

inline void write_trace(const fs::path& path, const std::vector<StepTrace>& t) {
  auto out = detail::open_out(path);
  out << "iteration,epoch,lambda,mismatch_before,mismatch_after,spread,attempts,accepted,jitter\n";
  for (const auto& s : t)
    out << s.iteration << ',' << s.epoch << ',' << detail::format_double(s.lambda) << ','
        << detail::format_double(s.mismatch_before) << ',' << detail::format_double(s.mismatch_after) << ','
        << detail::format_double(s.spread) << ',' << s.attempts << ',' << (s.accepted ? 1 : 0) << ','
        << detail::format_double(s.jitter) << '\n';
}

inline std::vector<WellRecord> training_wells(const ExperimentConfig& c, const std::vector<WellRecord>& wells) {
  if (c.train_wells.empty()) return wells;
  std::vector<WellRecord> out;
  for (const auto& id : c.train_wells) {
    auto it = std::find_if(wells.begin(), wells.end(), [&](const WellRecord& w) { return w.well_id == id; });
    if (it == wells.end()) throw InvalidArgument("train: no well named '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

inline CascadeResult cmd_train(const ExperimentConfig& cfg, const RunOptions& o) {
  const ExperimentConfig c = detail::with_threads(cfg, o.threads);
  detail::prepare_dir(o.out);
  detail::echo_config(c, o.out);
  const auto wells = training_wells(c, load_wells(c));
  const ChannelStats stats = zscore_fit(wells, all_channels(c));
  {
    auto out = detail::open_out(o.out / "stats.json");
    out << stats_to_json(stats).dump(2) << "\n";
  }
  std::vector<WellRecord> normalized;
  for (const auto& w : wells) normalized.push_back(zscore_apply(w, stats));

  const CascadePlan plan = plan_for(c);
  const auto t0 = std::chrono::steady_clock::now();
  CascadeResult r = cascade_train(plan, normalized, stats, c.cascade_options(), c.train_config(c.seed), c.perturb);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const std::string tag = "stage" + std::to_string(k);
    write_metrics(o.out / ("metrics_" + tag + ".csv"), r.stages[k].metrics);
    write_trace(o.out / ("lambda_trace_" + tag + ".csv"), r.stages[k].trace);
    save_checkpoint(o.out / (tag + ".ckpt"), r.states[k], Json{{"stage", k}, {"targets", plan.stages[k].targets}});
    const auto& last = r.stages[k].metrics.back();
    detail::logger(o) << tag << " (" << plan.stages[k].targets.front()
                      << (plan.stages[k].targets.size() > 1 ? "," + plan.stages[k].targets.back() : "")
                      << "): mismatch " << last.mismatch << ", spread " << last.spread << ", lambda " << last.lambda
                      << "\n";
  }
  detail::logger(o) << "trained " << plan.stages.size() << " stage(s) on " << wells.size() << " wells in "
                    << detail::seconds(secs) << "\n";
  return r;
}

// ---------------------------------------------------------------------------
// eval-loo

struct LooRow {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::string well;
  std::size_t epoch = 0;
  std::string target;
  double mse = 0.0;
};

struct LooSummary {
  struct Cell {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
  };
  // [target][epoch]; target "all" is the per-evaluation average over targets.
  std::map<std::string, std::map<std::size_t, Cell>> cells;
};

inline LooSummary summarize(const std::vector<LooRow>& rows) {
  std::map<std::string, std::map<std::size_t, std::vector<double>>> groups;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<double>> per_eval;
  for (const auto& r : rows) {
    groups[r.target][r.epoch].push_back(r.mse);
    per_eval[{r.repeat, r.fold, r.epoch}].push_back(r.mse);
  }
  for (const auto& [key, v] : per_eval) groups["all"][std::get<2>(key)].push_back(detail::mean(v));
  LooSummary s;
  for (const auto& [target, by_epoch] : groups)
    for (const auto& [epoch, v] : by_epoch) s.cells[target][epoch] = {v.size(), detail::mean(v), detail::median(v)};
  return s;
}

inline Json to_json(const LooSummary& s) {
  Json j = Json::object();
  for (const auto& [target, by_epoch] : s.cells) {
    Json t = Json::object();
    for (const auto& [epoch, cell] : by_epoch)
      t[std::to_string(epoch)] = {{"count", cell.count}, {"mean", cell.mean}, {"median", cell.median}};
    j[target] = t;
  }
  return j;
}

struct LooResult {
  std::vector<LooRow> rows;
  LooSummary summary;
};

// Leave-one-out over all wells, `repeats` times with independent seeds. Every
// fold is scored after each epoch on its held-out well (non-overlapping
// windows, stitched), so one run yields the whole epoch curve.
inline LooResult cmd_eval_loo(const ExperimentConfig& cfg, const RunOptions& o) {
  const ExperimentConfig c = detail::with_threads(cfg, o.threads);
  detail::prepare_dir(o.out);
  detail::echo_config(c, o.out);
  const auto wells = load_wells(c);
  const auto folds = loo_splits(wells);
  const CascadePlan plan = plan_for(c);
  const auto targets = plan.targets();
  CascadeOptions opt = c.cascade_options();
  opt.keep_snapshots = true;

  LooResult result;
  for (std::size_t rep = 0; rep < c.repeats; ++rep) {
    const std::uint64_t run_seed = c.repeats == 1 ? c.seed : derive_seed(c.seed, {0x7e9, rep});
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto train_wells = select(wells, folds[f].train);
      const WellRecord& test = wells[folds[f].test];
      const ChannelStats stats = zscore_fit(train_wells, all_channels(c));
      std::vector<WellRecord> normalized;
      for (const auto& w : train_wells) normalized.push_back(zscore_apply(w, stats));
      const WellRecord test_n = zscore_apply(test, stats);
      const Matrix truth = test_n.columns(targets);

      const CascadeResult r = cascade_train(plan, normalized, stats, opt, c.train_config(run_seed), c.perturb);
      for (std::size_t e = 0; e < c.train.epochs; ++e) {
        std::vector<EnsembleState> states;
        for (const auto& sr : r.stages) states.push_back(sr.snapshots.at(e));
        const CascadePrediction p = cascade_predict(plan, states, test_n, c.window_length, c.train.threads);
        for (std::size_t t = 0; t < targets.size(); ++t) {
          const auto col = static_cast<Eigen::Index>(t);
          result.rows.push_back(
              {rep, f, test.well_id, e + 1, targets[t], mse(Matrix(p.mean.col(col)), Matrix(truth.col(col)))});
        }
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      double last = 0.0;
      for (std::size_t t = 0; t < targets.size(); ++t) last += result.rows[result.rows.size() - targets.size() + t].mse;
      detail::logger(o) << "repeat " << rep + 1 << "/" << c.repeats << " fold " << f + 1 << "/" << folds.size() << " ("
                        << test.well_id << "): mse " << last / targets.size() << " after epoch " << c.train.epochs
                        << " [" << detail::seconds(secs) << "]\n";
    }
  }

  {
    auto out = detail::open_out(o.out / "loo_results.csv");
    out << "repeat,fold,well,epoch,target,mse\n";
    for (const auto& r : result.rows)
      out << r.repeat << ',' << r.fold << ',' << r.well << ',' << r.epoch << ',' << r.target << ','
          << detail::format_double(r.mse) << '\n';
  }
  result.summary = summarize(result.rows);
  {
    auto out = detail::open_out(o.out / "summary.json");
    out << to_json(result.summary).dump(2) << "\n";
  }
  const auto& all = result.summary.cells.at("all");
  for (const auto& [epoch, cell] : all)
    detail::logger(o) << "epoch " << epoch << ": mean " << cell.mean << ", median " << cell.median << " over "
                      << cell.count << " evaluations\n";
  return result;
}

// ---------------------------------------------------------------------------
// predict

// Loads stage checkpoints from `dir` and checks them against the plan.
inline std::vector<EnsembleState> load_stages(const CascadePlan& plan, const fs::path& dir) {
  std::vector<EnsembleState> states;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    Checkpoint ck = load_checkpoint(dir / ("stage" + std::to_string(k) + ".ckpt"));
    const std::string diff = spec_difference(plan.stages[k].spec, ck.state.spec);
    if (!diff.empty())
      throw InvalidArgument("predict: checkpoint stage" + std::to_string(k) + " does not match the config (" + diff +
                            " differs)");
    states.push_back(std::move(ck.state));
  }
  return states;
}

inline std::vector<fs::path> cmd_predict(const ExperimentConfig& cfg, const fs::path& checkpoint_dir,
                                         const fs::path& input_csv, const RunOptions& o) {
  const ExperimentConfig c = detail::with_threads(cfg, o.threads);
  const CascadePlan plan = plan_for(c);
  const auto states = load_stages(plan, checkpoint_dir);
  std::ifstream sin(checkpoint_dir / "stats.json");
  if (!sin) throw Error("predict: missing stats.json in '" + checkpoint_dir.string() + "'");
  ChannelStats stats;
  try {
    stats = stats_from_json(Json::parse(sin));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("stats.json: ") + e.what());
  }
  detail::prepare_dir(o.out);
  detail::echo_config(c, o.out);

  const auto wells = load_csv(input_csv);
  const auto targets = plan.targets();
  std::vector<fs::path> written;
  for (const auto& w : wells) {
    for (const auto& name : c.inputs) w.require_channel(name);
    const WellRecord wn = zscore_apply(w, stats);
    const CascadePrediction p = cascade_predict(plan, states, wn, c.window_length, c.train.threads);
    const fs::path path = o.out / ("predictions_" + w.well_id + ".csv");
    auto out = detail::open_out(path);
    out << "depth";
    for (const auto& t : targets) out << ',' << t << ',' << t << "_std";
    out << '\n';
    for (std::size_t i = 0; i < w.size(); ++i) {
      out << detail::format_double(w.depth[i]);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const ChannelScale& s = stats.at(targets[t]);
        const auto row = static_cast<Eigen::Index>(i);
        const auto col = static_cast<Eigen::Index>(t);
        out << ',' << detail::format_double(denormalize(p.mean(row, col), s)) << ','
            << detail::format_double(p.std(row, col) * s.stddev);
      }
      out << '\n';
    }
    written.push_back(path);
    detail::logger(o) << "wrote " << path.string() << " (" << w.size() << " rows)\n";
  }
  return written;
}

}  // namespace enlstm
