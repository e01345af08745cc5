#pragma once

// Cascaded multi-target models. Targets are predicted two at a time; every
// stage sees the base inputs plus the normalized predictions of all earlier
// stages, appended in plan order.

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "enlstm/data.hpp"
#include "enlstm/enrml.hpp"
#include "enlstm/error.hpp"
#include "enlstm/network.hpp"

namespace enlstm {

// Target order of the eleven-input, twelve-output shale gas case study.
inline const std::vector<std::string>& case_study_targets() {
  static const std::vector<std::string> order{"E_x",  "E_y",  "C",    "UCS",  "rho", "TS",
                                              "BI_x", "BI_y", "nu_x", "nu_y", "NPR", "TOC"};
  return order;
}

inline const std::vector<std::string>& case_study_inputs() {
  static const std::vector<std::string> order{"D",    "MSPD", "CGR",  "THOR", "POTA", "URAN",
                                              "R20F", "R85F", "V_p",  "V_sx", "V_sy"};
  return order;
}

struct CascadeStage {
  std::vector<std::string> targets;  // one or two channel names
  NetworkSpec spec;
};

struct CascadePlan {
  std::vector<std::string> base_inputs;
  std::vector<CascadeStage> stages;

  // All targets in plan order.
  std::vector<std::string> targets() const {
    std::vector<std::string> out;
    for (const auto& s : stages) out.insert(out.end(), s.targets.begin(), s.targets.end());
    return out;
  }

  // Input width of stage k: base inputs plus every earlier stage's outputs.
  std::size_t input_dim(std::size_t k) const {
    std::size_t w = base_inputs.size();
    for (std::size_t i = 0; i < k; ++i) w += stages.at(i).targets.size();
    return w;
  }

  // Channel names feeding stage k, in the order the network sees them.
  std::vector<std::string> stage_inputs(std::size_t k) const {
    std::vector<std::string> out = base_inputs;
    for (std::size_t i = 0; i < k; ++i) out.insert(out.end(), stages.at(i).targets.begin(), stages.at(i).targets.end());
    return out;
  }

  void validate() const {
    detail::require(!base_inputs.empty(), "cascade: no base inputs");
    detail::require(!stages.empty(), "cascade: no stages");
    std::set<std::string> seen(base_inputs.begin(), base_inputs.end());
    detail::require(seen.size() == base_inputs.size(), "cascade: duplicate base input");
    for (std::size_t k = 0; k < stages.size(); ++k) {
      const auto& s = stages[k];
      detail::require(s.targets.size() == 1 || s.targets.size() == 2, "cascade: stage must predict one or two targets");
      for (const auto& t : s.targets)
        if (!seen.insert(t).second) throw InvalidArgument("cascade: duplicate target '" + t + "'");
      s.spec.validate();
      if (s.spec.input_dim != input_dim(k))
        throw InvalidArgument("cascade: stage " + std::to_string(k) + " expects input width " +
                              std::to_string(input_dim(k)) + ", spec has " + std::to_string(s.spec.input_dim));
      detail::require(s.spec.output_dim == s.targets.size(),
                      "cascade: stage " + std::to_string(k) + " output width does not match its targets");
    }
  }
};

// Pairs targets in the given order; an odd trailing target gets its own
// single-output stage. Stage k's network has input width |inputs| + 2k.
inline CascadePlan build_plan(const std::vector<std::string>& base_inputs, const std::vector<std::string>& targets,
                              const NetworkTemplate& tpl) {
  detail::require(!targets.empty(), "cascade: no targets");
  CascadePlan plan;
  plan.base_inputs = base_inputs;
  for (std::size_t i = 0; i < targets.size(); i += 2) {
    CascadeStage st;
    st.targets.push_back(targets[i]);
    if (i + 1 < targets.size()) st.targets.push_back(targets[i + 1]);
    st.spec = tpl.instantiate(plan.input_dim(plan.stages.size()), st.targets.size());
    plan.stages.push_back(std::move(st));
  }
  plan.validate();
  return plan;
}

struct CascadeOptions {
  std::size_t window_length = 130;
  std::size_t stride = 40;
  // Feed measured instead of predicted intermediate targets while training.
  bool feed_truth = false;
  // Keep a copy of every stage's ensemble after each epoch.
  bool keep_snapshots = false;
};

struct StageResult {
  std::vector<EpochMetrics> metrics;
  std::vector<StepTrace> trace;
  std::vector<EnsembleState> snapshots;  // one per epoch when requested; priors dropped
};

struct CascadeResult {
  std::vector<EnsembleState> states;
  std::vector<StageResult> stages;
};

// Seed for stage k. Stage 0 uses the configured seed unchanged, so a
// one-stage cascade trains exactly like a plain model.
inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t k) {
  return k == 0 ? seed : derive_seed(seed, {0xca5c, static_cast<std::uint64_t>(k)});
}

// Normalized input block for stage k on one well: base inputs followed by the
// stitched mean predictions of stages 0..k-1, each stage consuming the block
// built so far. `states` must hold at least k stages.
inline Matrix stage_input_block(const CascadePlan& plan, const std::vector<EnsembleState>& states,
                                const WellRecord& normalized, std::size_t k, std::size_t window_length,
                                std::size_t threads = 1) {
  detail::require(states.size() >= k, "cascade: missing earlier stage states");
  Matrix x = normalized.columns(plan.base_inputs);
  for (std::size_t i = 0; i < k; ++i) {
    const Prediction p = predict_stitched(states[i], x, window_length, threads);
    Matrix grown(x.rows(), x.cols() + p.mean.cols());
    grown << x, p.mean;
    x = std::move(grown);
  }
  return x;
}

// Trains every stage in order on normalized training wells. `stats` carries
// the real-scale (mu, sigma) of every target, used by the observation
// perturbation.
inline CascadeResult cascade_train(const CascadePlan& plan, const std::vector<WellRecord>& normalized,
                                   const ChannelStats& stats, const CascadeOptions& opt, const TrainConfig& cfg,
                                   const PerturbationConfig& pcfg) {
  plan.validate();
  detail::require(!normalized.empty(), "cascade: no training wells");
  CascadeResult result;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const CascadeStage& stage = plan.stages[k];
    std::vector<Matrix> xs;
    std::vector<Matrix> ys;
    for (const auto& w : normalized) {
      xs.push_back(opt.feed_truth ? w.columns(plan.stage_inputs(k))
                                  : stage_input_block(plan, result.states, w, k, opt.window_length, cfg.threads));
      ys.push_back(w.columns(stage.targets));
    }
    if (static_cast<std::size_t>(xs.front().cols()) != stage.spec.input_dim)
      throw InvalidArgument("cascade: stage " + std::to_string(k) + " input width mismatch");
    const TrainingSet data = TrainingSet::from_series(xs, ys, opt.window_length, opt.stride);
    if (data.windows.windows.empty())
      throw InvalidArgument("cascade: stage " + std::to_string(k) + ": no training window fits the series");

    TrainConfig scfg = cfg;
    scfg.seed = stage_seed(cfg.seed, k);
    PerturbationConfig spcfg = pcfg;
    spcfg.channel_stats = stats.select(stage.targets);

    StageResult sr;
    TrainHooks hooks;
    if (opt.keep_snapshots) {
      hooks.on_epoch = [&sr](const EnsembleState& s, const EpochMetrics&) {
        EnsembleState snap = s;
        snap.priors.resize(0, 0);
        sr.snapshots.push_back(std::move(snap));
      };
    }
    TrainResult tr;
    try {
      tr = train(stage.spec, data, scfg, spcfg, hooks);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("cascade stage " + std::to_string(k) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("cascade stage " + std::to_string(k) + ": " + e.what());
    }
    sr.metrics = std::move(tr.metrics);
    sr.trace = std::move(tr.trace);
    result.states.push_back(std::move(tr.state));
    result.stages.push_back(std::move(sr));
  }
  return result;
}

struct CascadePrediction {
  std::vector<std::string> targets;  // column names in plan order
  Matrix mean;                       // T x targets, normalized scale
  Matrix std;
};

// Runs every stage in order on one normalized well and collects the outputs.
inline CascadePrediction cascade_predict(const CascadePlan& plan, const std::vector<EnsembleState>& states,
                                         const WellRecord& normalized, std::size_t window_length,
                                         std::size_t threads = 1) {
  if (states.size() != plan.stages.size())
    throw InvalidArgument("cascade: plan has " + std::to_string(plan.stages.size()) + " stages but " +
                          std::to_string(states.size()) + " states were given");
  for (std::size_t k = 0; k < states.size(); ++k) {
    const std::string diff = spec_difference(plan.stages[k].spec, states[k].spec);
    if (!diff.empty()) throw InvalidArgument("cascade: stage " + std::to_string(k) + " spec differs in " + diff);
  }
  CascadePrediction out;
  out.targets = plan.targets();
  const auto T = static_cast<Eigen::Index>(normalized.size());
  out.mean.resize(T, static_cast<Eigen::Index>(out.targets.size()));
  out.std.resize(T, static_cast<Eigen::Index>(out.targets.size()));
  Matrix x = normalized.columns(plan.base_inputs);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const Prediction p = predict_stitched(states[k], x, window_length, threads);
    out.mean.middleCols(col, p.mean.cols()) = p.mean;
    out.std.middleCols(col, p.std.cols()) = p.std;
    col += p.mean.cols();
    Matrix grown(x.rows(), x.cols() + p.mean.cols());
    grown << x, p.mean;
    x = std::move(grown);
  }
  return out;
}

}  // namespace enlstm
