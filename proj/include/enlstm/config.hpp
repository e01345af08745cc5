#pragma once

// Experiment configuration: one JSON file drives every CLI command. Missing
// keys take the defaults below, unknown keys are rejected, and the fully
// resolved configuration is echoed into the output directory.
//
// {
//   "data":    {"csv": "wells.csv"}                       or
//              {"synth": {"seed": 0, "n_wells": 6, "length": 800, "n_in": 4,
//                         "n_out": 3, "noise": 0.05, "lags": [0, 3, 8]}},
//   "inputs":  ["x0", ...],          // default: synth input names
//   "targets": ["y0", ...],          // cascade order, paired two at a time
//   "network": {"lstm_hidden": 30, "dense_hidden": 15, "batchnorm": true, "dropout": 0.3},
//   "train":   {"n_realizations": 100, "batch_size": 64, "eps_real_std": 0.02,
//               "epochs": 5, "lambda_init": 1.0, "lambda_scaled": false,
//               "lambda_factor": 10, "prior_std": 0.1, "max_retries": 3,
//               "reperturb_each_epoch": false, "route": "automatic", "threads": 1},
//   "perturb": {"alpha": 0.99, "h": 0.1, "h_decay": 1.0},
//   "window":  {"length": 130, "stride": 40},
//   "cascade": {"feed_truth": false},
//   "train_wells": [],               // empty: every well
//   "repeats": 1,
//   "seed": 0,
//   "output_dir": "out"
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "enlstm/cascade.hpp"
#include "enlstm/checkpoint.hpp"
#include "enlstm/data.hpp"
#include "enlstm/enrml.hpp"
#include "enlstm/error.hpp"
#include "enlstm/network.hpp"
#include "enlstm/perturb.hpp"

namespace enlstm {

struct ExperimentConfig {
  std::string csv;  // data file; empty means synthetic data
  SynthSpec synth;
  std::vector<std::string> inputs;
  std::vector<std::string> targets;
  NetworkTemplate network;
  TrainConfig train;
  PerturbationConfig perturb;  // alpha, h, h_decay; eps comes from train
  std::size_t window_length = 130;
  std::size_t stride = 40;
  bool feed_truth = false;
  std::vector<std::string> train_wells;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  bool synthetic() const { return csv.empty(); }

  CascadeOptions cascade_options() const {
    CascadeOptions o;
    o.window_length = window_length;
    o.stride = stride;
    o.feed_truth = feed_truth;
    return o;
  }

  // Training configuration with the experiment seed folded in.
  TrainConfig train_config(std::uint64_t run_seed) const {
    TrainConfig c = train;
    c.seed = run_seed;
    return c;
  }

  void validate() const {
    detail::require(!inputs.empty(), "config: no input channels");
    detail::require(!targets.empty(), "config: no target channels");
    std::set<std::string> names(inputs.begin(), inputs.end());
    for (const auto& t : targets)
      if (!names.insert(t).second) throw InvalidArgument("config: channel '" + t + "' listed twice");
    detail::require(names.size() == inputs.size() + targets.size(), "config: duplicate input channel");
    detail::require(window_length >= 1, "config: window length must be >= 1");
    detail::require(stride >= 1, "config: window stride must be >= 1");
    detail::require(repeats >= 1, "config: repeats must be >= 1");
    detail::require(network.lstm_hidden >= 1, "config: lstm_hidden must be >= 1");
    detail::require(network.dropout >= 0.0 && network.dropout < 1.0, "config: dropout must lie in [0, 1)");
    train.validate();
    detail::require(train.eps_real_std > 0.0, "config: eps_real_std must be > 0");
    PerturbationConfig p = perturb;
    p.channel_stats.clear();
    p.validate();
  }
};

namespace detail {

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ParseError("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ParseError("config: unknown key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
  }
}

template <class T>
void read_opt(const Json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

inline std::string route_name(UpdateRoute r) {
  switch (r) {
    case UpdateRoute::dense: return "dense";
    case UpdateRoute::subspace: return "subspace";
    default: return "automatic";
  }
}

inline UpdateRoute parse_route(const std::string& s) {
  if (s == "automatic") return UpdateRoute::automatic;
  if (s == "dense") return UpdateRoute::dense;
  if (s == "subspace") return UpdateRoute::subspace;
  throw ParseError("config: unknown update route '" + s + "'");
}

}  // namespace detail

// Parses a configuration. Relative csv paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    detail::reject_unknown(j,
                           {"data", "inputs", "targets", "network", "train", "perturb", "window", "cascade",
                            "train_wells", "repeats", "seed", "output_dir"},
                           "");
    if (j.contains("data")) {
      const Json& d = j.at("data");
      detail::reject_unknown(d, {"csv", "synth"}, "data");
      if (d.contains("csv") && d.contains("synth")) throw ParseError("config: data needs either csv or synth, not both");
      if (d.contains("csv")) {
        std::filesystem::path p = d.at("csv").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.csv = p.string();
      }
      if (d.contains("synth")) {
        const Json& s = d.at("synth");
        detail::reject_unknown(s, {"seed", "n_wells", "length", "n_in", "n_out", "noise", "lags"}, "data.synth");
        detail::read_opt(s, "seed", c.synth.seed);
        detail::read_opt(s, "n_wells", c.synth.n_wells);
        detail::read_opt(s, "length", c.synth.length);
        detail::read_opt(s, "n_in", c.synth.n_in);
        detail::read_opt(s, "n_out", c.synth.n_out);
        detail::read_opt(s, "noise", c.synth.noise);
        detail::read_opt(s, "lags", c.synth.lags);
      }
    }
    if (c.synthetic()) {
      c.inputs = synth_input_names(c.synth.n_in);
      c.targets = synth_target_names(c.synth.n_out);
    }
    detail::read_opt(j, "inputs", c.inputs);
    detail::read_opt(j, "targets", c.targets);
    if (j.contains("network")) {
      const Json& n = j.at("network");
      detail::reject_unknown(n, {"lstm_hidden", "dense_hidden", "batchnorm", "dropout"}, "network");
      detail::read_opt(n, "lstm_hidden", c.network.lstm_hidden);
      detail::read_opt(n, "dense_hidden", c.network.dense_hidden);
      detail::read_opt(n, "batchnorm", c.network.batchnorm);
      detail::read_opt(n, "dropout", c.network.dropout);
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      detail::reject_unknown(t,
                             {"n_realizations", "batch_size", "eps_real_std", "epochs", "lambda_init", "lambda_scaled",
                              "lambda_factor", "prior_std", "max_retries", "reperturb_each_epoch", "route", "threads"},
                             "train");
      detail::read_opt(t, "n_realizations", c.train.n_realizations);
      detail::read_opt(t, "batch_size", c.train.batch_size);
      detail::read_opt(t, "eps_real_std", c.train.eps_real_std);
      detail::read_opt(t, "epochs", c.train.epochs);
      detail::read_opt(t, "lambda_init", c.train.lambda_init);
      detail::read_opt(t, "lambda_scaled", c.train.lambda_scaled);
      detail::read_opt(t, "lambda_factor", c.train.lambda_factor);
      detail::read_opt(t, "prior_std", c.train.prior_std);
      detail::read_opt(t, "max_retries", c.train.max_retries);
      detail::read_opt(t, "reperturb_each_epoch", c.train.reperturb_each_epoch);
      detail::read_opt(t, "threads", c.train.threads);
      if (t.contains("route")) c.train.route = detail::parse_route(t.at("route").get<std::string>());
    }
    if (j.contains("perturb")) {
      const Json& p = j.at("perturb");
      detail::reject_unknown(p, {"alpha", "h", "h_decay"}, "perturb");
      detail::read_opt(p, "alpha", c.perturb.alpha);
      detail::read_opt(p, "h", c.perturb.h);
      detail::read_opt(p, "h_decay", c.perturb.h_decay);
    }
    if (j.contains("window")) {
      const Json& w = j.at("window");
      detail::reject_unknown(w, {"length", "stride"}, "window");
      detail::read_opt(w, "length", c.window_length);
      detail::read_opt(w, "stride", c.stride);
    }
    if (j.contains("cascade")) {
      const Json& cc = j.at("cascade");
      detail::reject_unknown(cc, {"feed_truth"}, "cascade");
      detail::read_opt(cc, "feed_truth", c.feed_truth);
    }
    detail::read_opt(j, "train_wells", c.train_wells);
    detail::read_opt(j, "repeats", c.repeats);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "output_dir", c.output_dir);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.perturb.eps_real_std = c.train.eps_real_std;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// The fully resolved configuration, defaults included.
inline Json to_json(const ExperimentConfig& c) {
  Json data;
  if (c.synthetic())
    data["synth"] = {{"seed", c.synth.seed},   {"n_wells", c.synth.n_wells}, {"length", c.synth.length},
                     {"n_in", c.synth.n_in},   {"n_out", c.synth.n_out},     {"noise", c.synth.noise},
                     {"lags", c.synth.lags}};
  else
    data["csv"] = c.csv;
  return {
      {"data", data},
      {"inputs", c.inputs},
      {"targets", c.targets},
      {"network",
       {{"lstm_hidden", c.network.lstm_hidden},
        {"dense_hidden", c.network.dense_hidden},
        {"batchnorm", c.network.batchnorm},
        {"dropout", c.network.dropout}}},
      {"train",
       {{"n_realizations", c.train.n_realizations},
        {"batch_size", c.train.batch_size},
        {"eps_real_std", c.train.eps_real_std},
        {"epochs", c.train.epochs},
        {"lambda_init", c.train.lambda_init},
        {"lambda_scaled", c.train.lambda_scaled},
        {"lambda_factor", c.train.lambda_factor},
        {"prior_std", c.train.prior_std},
        {"max_retries", c.train.max_retries},
        {"reperturb_each_epoch", c.train.reperturb_each_epoch},
        {"route", detail::route_name(c.train.route)},
        {"threads", c.train.threads}}},
      {"perturb", {{"alpha", c.perturb.alpha}, {"h", c.perturb.h}, {"h_decay", c.perturb.h_decay}}},
      {"window", {{"length", c.window_length}, {"stride", c.stride}}},
      {"cascade", {{"feed_truth", c.feed_truth}}},
      {"train_wells", c.train_wells},
      {"repeats", c.repeats},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

}  // namespace enlstm
