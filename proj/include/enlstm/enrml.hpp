#pragma once

// Ensemble randomized maximum likelihood (EnRML) training.
//
// Every member m_j (a flat parameter vector) is moved by the Levenberg-Marquardt
// form of the iterative ensemble smoother:
//
//   m_j <- m_j - 1/(1+lambda) [C_M_l - C_MD K^-1 C_MD^T] C_M^-1 (m_j - m_pr,j)
//              - C_MD K^-1 (g(m_j) - d_obs,j),
//   K = (1+lambda) C_D + C_DD,
//
// with C_M_l, C_MD, C_DD the ensemble (cross-)covariances of parameters and
// predictions, C_M the fixed diagonal prior covariance and C_D the diagonal
// observation-error covariance. No derivative of the network is ever taken.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "enlstm/data.hpp"
#include "enlstm/error.hpp"
#include "enlstm/linalg.hpp"
#include "enlstm/network.hpp"
#include "enlstm/parallel.hpp"
#include "enlstm/perturb.hpp"
#include "enlstm/rng.hpp"

namespace enlstm {

// How the update inverts K.
//  dense:    forms the N_d x N_d matrix K and solves with it directly.
//  subspace: uses C_DD = dD dD^T (rank N_e - 1) and the push-through identity
//            dD^T K^-1 = S^-1 dD^T A^-1, A = (1+lambda) C_D, S = I + dD^T A^-1 dD,
//            so only an N_e x N_e system is solved. Requires C_D > 0.
//  automatic: dense when N_d and N_m are both at most N_e (or C_D has zeros),
//            subspace otherwise.
enum class UpdateRoute { automatic, dense, subspace };

struct TrainConfig {
  std::size_t n_realizations = 100;
  std::size_t batch_size = 64;
  double eps_real_std = 0.02;
  std::size_t epochs = 5;
  double lambda_init = 1.0;
  // Replace lambda_init on the first batch by 10^floor(log10(O / 2N_d)), O the
  // ensemble-mean data objective sum (g - d)^2 / c_d, so that the first damped
  // step is commensurate with the initial misfit.
  bool lambda_scaled = false;
  double lambda_factor = 10.0;
  double prior_std = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_retries = 3;
  // Redraw observation perturbations every epoch instead of once per run.
  bool reperturb_each_epoch = false;
  UpdateRoute route = UpdateRoute::automatic;
  // Worker cap for member evaluation. Results do not depend on it.
  std::size_t threads = 1;

  void validate() const {
    detail::require(n_realizations >= 2, "train: n_realizations must be >= 2");
    detail::require(batch_size >= 1, "train: batch_size must be >= 1");
    detail::require(epochs >= 1, "train: epochs must be >= 1");
    detail::require(eps_real_std >= 0.0, "train: eps_real_std must be >= 0");
    detail::require(lambda_init > 0.0, "train: lambda_init must be > 0");
    detail::require(lambda_factor > 1.0, "train: lambda_factor must be > 1");
    detail::require(prior_std >= 0.0, "train: prior_std must be >= 0");
  }
};

struct EnsembleState {
  NetworkSpec spec;
  Matrix members;   // N_m x N_e, one realization per column
  Matrix priors;    // frozen initial members, same shape
  Vector prior_var; // diagonal of C_M
  double lambda = 1.0;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::vector<NetworkAux> aux;  // per member
  SeedStreams seeds;

  std::size_t size() const { return static_cast<std::size_t>(members.cols()); }
  std::size_t n_params() const { return static_cast<std::size_t>(members.rows()); }
  std::span<const double> member(std::size_t j) const {
    return {members.col(static_cast<Eigen::Index>(j)).data(), n_params()};
  }

  void validate() const {
    detail::require(members.rows() == priors.rows() && members.cols() == priors.cols(),
                    "ensemble: members and priors differ in shape");
    detail::require(prior_var.size() == members.rows(), "ensemble: prior_var length mismatch");
    detail::require(aux.size() == size(), "ensemble: one aux state per member required");
    detail::require(lambda > 0.0, "ensemble: lambda must be > 0");
    detail::require(n_params() == param_count(spec), "ensemble: parameter count does not match spec");
  }
};

inline EnsembleState init_ensemble(const NetworkSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  EnsembleState st;
  st.spec = spec;
  const auto n_m = static_cast<Eigen::Index>(param_count(spec));
  const auto n_e = static_cast<Eigen::Index>(cfg.n_realizations);
  st.seeds = SeedStreams::from_seed(cfg.seed);
  st.members.resize(n_m, n_e);
  for (Eigen::Index j = 0; j < n_e; ++j) {
    Engine eng = make_engine(st.seeds.init, {static_cast<std::uint64_t>(j)});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index k = 0; k < n_m; ++k) st.members(k, j) = cfg.prior_std * normal(eng);
  }
  st.priors = st.members;
  st.prior_var = Vector::Constant(n_m, cfg.prior_std * cfg.prior_std);
  st.lambda = cfg.lambda_init;
  st.aux.assign(cfg.n_realizations, NetworkAux::initial(spec));
  return st;
}

// ---------------------------------------------------------------------------
// Update step

struct StepResult {
  Matrix members;
  double jitter = 0.0;
  UpdateRoute route = UpdateRoute::automatic;
};

// One simultaneous update of every member. predictions and observations are
// N_d x N_e (column j belongs to member j); c_d_diag is the diagonal of C_D.
inline StepResult enrml_step(const Matrix& members, const Matrix& priors, const Vector& prior_var, double lambda,
                             const Matrix& predictions, const Matrix& observations, const Vector& c_d_diag,
                             UpdateRoute route = UpdateRoute::automatic) {
  const Eigen::Index n_e = members.cols();
  const Eigen::Index n_m = members.rows();
  const Eigen::Index n_d = predictions.rows();
  if (n_e < 2) throw InvalidArgument("covariance undefined");
  detail::require(priors.rows() == n_m && priors.cols() == n_e, "enrml_step: priors shape mismatch");
  detail::require(prior_var.size() == n_m, "enrml_step: prior_var length mismatch");
  detail::require((prior_var.array() > 0.0).all(), "enrml_step: prior variance must be > 0");
  detail::require(predictions.cols() == n_e && observations.cols() == n_e,
                  "enrml_step: predictions/observations need one column per member");
  detail::require(observations.rows() == n_d, "enrml_step: predictions and observations differ in length");
  detail::require(c_d_diag.size() == n_d, "enrml_step: c_d_diag length mismatch");
  detail::require((c_d_diag.array() >= 0.0).all(), "enrml_step: observation variance must be >= 0");
  detail::require(lambda >= 0.0, "enrml_step: lambda must be >= 0");

  const bool positive_cd = (c_d_diag.array() > 0.0).all();
  if (route == UpdateRoute::automatic)
    route = (!positive_cd || (n_d <= n_e && n_m <= n_e)) ? UpdateRoute::dense : UpdateRoute::subspace;
  if (route == UpdateRoute::subspace && !positive_cd)
    throw InvalidArgument("enrml_step: subspace route requires positive observation variance");

  const double damp = 1.0 / (1.0 + lambda);
  const Matrix model_dev = (members - priors).array().colwise() / prior_var.array();  // C_M^-1 (m_j - m_pr,j)
  const Matrix residual = predictions - observations;                                // g(m_j) - d_obs,j

  StepResult out;
  out.route = route;
  if (route == UpdateRoute::dense) {
    const Matrix c_md = cross_covariance(members, predictions);
    Matrix k = covariance(predictions);
    k.diagonal() += (1.0 + lambda) * c_d_diag;
    Matrix rhs(n_d, 2 * n_e);
    rhs.leftCols(n_e) = c_md.transpose() * model_dev;
    rhs.rightCols(n_e) = residual;
    const SpdSolution sol = spd_solve(k, rhs);
    const Matrix c_m = covariance(members);
    out.members = members - damp * (c_m * model_dev - c_md * sol.x.leftCols(n_e)) - c_md * sol.x.rightCols(n_e);
    out.jitter = sol.jitter;
  } else {
    const double norm = 1.0 / std::sqrt(static_cast<double>(n_e - 1));
    const Matrix dm = centered(members) * norm;
    const Matrix dd = centered(predictions) * norm;
    const Vector a_inv = (1.0 / ((1.0 + lambda) * c_d_diag.array())).matrix();
    const Matrix weighted = a_inv.asDiagonal() * dd;  // A^-1 dD
    Matrix s = dd.transpose() * weighted;
    s = 0.5 * (s + s.transpose());
    s.diagonal().array() += 1.0;
    const Matrix rhs = damp * (dm.transpose() * model_dev) + weighted.transpose() * residual;
    const SpdSolution sol = spd_solve(s, rhs);
    out.members = members - dm * sol.x;
    out.jitter = sol.jitter;
  }
  if (!out.members.allFinite()) throw NumericalError("update diverged");
  return out;
}

inline StepResult enrml_step(const EnsembleState& state, const Matrix& predictions, const Matrix& observations,
                             const Vector& c_d_diag, UpdateRoute route = UpdateRoute::automatic) {
  return enrml_step(state.members, state.priors, state.prior_var, state.lambda, predictions, observations, c_d_diag,
                    route);
}

struct LambdaDecision {
  double lambda = 1.0;
  bool accepted = false;
};

inline constexpr double kLambdaFloor = 1e-8;

// Levenberg-Marquardt schedule: shrink lambda after an improving step, grow it
// and reject the step otherwise.
inline LambdaDecision lambda_update(double lambda, double factor, double mismatch_before, double mismatch_after) {
  detail::require(mismatch_before >= 0.0 && mismatch_after >= 0.0, "lambda_update: mismatches must be >= 0");
  if (mismatch_after < mismatch_before) return {std::max(lambda / factor, kLambdaFloor), true};
  return {lambda * factor, false};
}

// Data-scaled starting lambda: the power of ten at or below mismatch / (2 c_d),
// where mismatch is the per-element squared error and c_d the observation variance.
inline double scaled_lambda(double mismatch, double c_d) {
  detail::require(mismatch >= 0.0 && c_d > 0.0, "scaled_lambda: need mismatch >= 0 and c_d > 0");
  const double ratio = mismatch / (2.0 * c_d);
  if (!(ratio > kLambdaFloor)) return kLambdaFloor;
  return std::pow(10.0, std::floor(std::log10(ratio)));
}

// Ensemble-average squared data mismatch, mean_j |g_j - d_j|^2 / N_d.
inline double data_mismatch(const Matrix& predictions, const Matrix& observations) {
  detail::require(predictions.rows() == observations.rows() && predictions.cols() == observations.cols(),
                  "data_mismatch: shape mismatch");
  long double s = 0.0L;
  for (Eigen::Index j = 0; j < predictions.cols(); ++j)
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
      const long double d = predictions(i, j) - observations(i, j);
      s += d * d;
    }
  return static_cast<double>(s / (predictions.rows() * predictions.cols()));
}

// Mean over prediction elements of the across-member sample standard deviation.
inline double prediction_spread(const Matrix& predictions) {
  if (predictions.cols() < 2) return 0.0;
  const Matrix dev = centered(predictions);
  const Vector sd = (dev.rowwise().squaredNorm() / static_cast<double>(predictions.cols() - 1)).cwiseSqrt();
  return sd.mean();
}

// ---------------------------------------------------------------------------
// Training loop

// Normalized training data. windows[w].record indexes `targets`, the full
// normalized target series each window was cut from; observation
// perturbations are drawn on those series so overlapping windows agree.
struct TrainingSet {
  WindowedBatch windows;
  std::vector<Matrix> targets;  // per source series, T x n_out

  // Builds the set from per-series normalized inputs and targets.
  static TrainingSet from_series(const std::vector<Matrix>& inputs, const std::vector<Matrix>& targets,
                                 std::size_t length, std::size_t stride) {
    detail::require(inputs.size() == targets.size(), "training set: inputs/targets series count mismatch");
    TrainingSet ts;
    ts.windows.length = length;
    for (std::size_t r = 0; r < inputs.size(); ++r) ts.windows.append(window(inputs[r], targets[r], length, stride, r));
    ts.targets = targets;
    return ts;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mismatch = 0.0;  // mean over batches of the accepted post-update mismatch
  double spread = 0.0;    // mean over batches of the post-update prediction spread
  double lambda = 0.0;    // lambda at epoch end
  std::size_t batches = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct StepTrace {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double lambda = 0.0;  // lambda used by the committed step
  double mismatch_before = 0.0;
  double mismatch_after = 0.0;
  double spread = 0.0;
  std::size_t attempts = 0;
  bool accepted = false;
  double jitter = 0.0;
};

struct TrainResult {
  EnsembleState state;
  std::vector<EpochMetrics> metrics;
  std::vector<StepTrace> trace;
};

struct TrainHooks {
  std::function<void(const EnsembleState&, const EpochMetrics&)> on_epoch;
};

namespace detail {

struct BatchEval {
  Matrix predictions;  // N_d x N_e
  std::vector<std::vector<RunningStats>> stats;
  bool finite = true;
};

inline BatchEval evaluate_members(const NetworkSpec& spec, const Matrix& members, const SequenceBatch& x,
                                  const DropoutMasks& masks, std::uint64_t dropout_seed, std::size_t threads) {
  const auto n_e = static_cast<std::size_t>(members.cols());
  const auto n_d = static_cast<Eigen::Index>(spec.output_dim * x.steps * x.batch);
  BatchEval ev;
  ev.predictions.resize(n_d, static_cast<Eigen::Index>(n_e));
  ev.stats.resize(n_e);
  std::vector<char> ok(n_e, 1);
  parallel_for(n_e, threads, [&](std::size_t j) {
    ForwardContext ctx;
    ctx.mode = Mode::train;
    ctx.dropout_seed = dropout_seed;
    ctx.masks = &masks;
    ctx.batch_stats = &ev.stats[j];
    try {
      const SequenceBatch y = forward(spec, {members.col(static_cast<Eigen::Index>(j)).data(),
                                             static_cast<std::size_t>(members.rows())},
                                      x, ctx);
      ev.predictions.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vector>(y.values.data(), n_d);
    } catch (const NumericalError&) {
      ok[j] = 0;
    }
  });
  ev.finite = std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
  return ev;
}

// Per-member perturbed copies of every target series.
inline std::vector<std::vector<Matrix>> perturbed_targets(const std::vector<Matrix>& targets,
                                                          const PerturbationConfig& pcfg, std::size_t n_e,
                                                          std::uint64_t seed, std::size_t threads) {
  std::vector<std::vector<Matrix>> out(n_e);
  parallel_for(n_e, threads, [&](std::size_t j) {
    out[j].reserve(targets.size());
    for (std::size_t r = 0; r < targets.size(); ++r) {
      const Matrix& t = targets[r];
      std::vector<std::size_t> channels(static_cast<std::size_t>(t.size()));
      for (Eigen::Index i = 0; i < t.size(); ++i) channels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i / t.rows());
      const auto values = perturb_observations({t.data(), static_cast<std::size_t>(t.size())}, channels, pcfg, j,
                                               derive_seed(seed, {r}));
      out[j].push_back(Eigen::Map<const Matrix>(values.data(), t.rows(), t.cols()));
    }
  });
  return out;
}

}  // namespace detail

// Continues training an existing ensemble for cfg.epochs epochs.
inline TrainResult train_from(EnsembleState state, const TrainingSet& data, const TrainConfig& cfg,
                              const PerturbationConfig& pcfg_in, const TrainHooks& hooks = {}) {
  cfg.validate();
  state.validate();
  const WindowedBatch& wb = data.windows;
  if (wb.windows.empty()) throw InvalidArgument("train: empty dataset");
  const NetworkSpec& spec = state.spec;
  const std::size_t L = wb.length;
  const std::size_t n_in = wb.n_inputs();
  const std::size_t n_out = wb.n_targets();
  detail::require(n_in == spec.input_dim, "train: window input width does not match spec input_dim");
  detail::require(n_out == spec.output_dim, "train: window target width does not match spec output_dim");
  detail::require(cfg.eps_real_std > 0.0, "train: eps_real_std must be > 0 (it sets C_D)");
  PerturbationConfig pcfg = pcfg_in;
  pcfg.eps_real_std = cfg.eps_real_std;
  pcfg.validate();
  detail::require(pcfg.channel_stats.size() == n_out, "train: one channel scale per target required");
  for (const auto& w : wb.windows) detail::require(w.record < data.targets.size(), "train: window references unknown series");

  const std::size_t n_e = state.size();
  const double c_d = cfg.eps_real_std * cfg.eps_real_std;

  TrainResult result;
  std::vector<std::vector<Matrix>> observed;
  if (!cfg.reperturb_each_epoch)
    observed = detail::perturbed_targets(data.targets, pcfg, n_e, state.seeds.observation, cfg.threads);

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = state.epoch;
    if (cfg.reperturb_each_epoch)
      observed = detail::perturbed_targets(data.targets, pcfg, n_e, derive_seed(state.seeds.observation, {epoch}),
                                           cfg.threads);
    std::vector<std::size_t> order(wb.windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine shuffle_eng = make_engine(state.seeds.shuffle, {epoch});
    std::shuffle(order.begin(), order.end(), shuffle_eng);

    EpochMetrics em;
    em.epoch = epoch + 1;
    long double mismatch_sum = 0.0L;
    long double spread_sum = 0.0L;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, order.size() - begin);
      SequenceBatch x(L, B, n_in);
      const auto n_d = static_cast<Eigen::Index>(L * B * n_out);
      Matrix obs(n_d, static_cast<Eigen::Index>(n_e));
      for (std::size_t b = 0; b < B; ++b) {
        const Window& w = wb.windows[order[begin + b]];
        for (std::size_t t = 0; t < L; ++t) {
          const auto col = static_cast<Eigen::Index>(t * B + b);
          x.values.col(col) = w.inputs.row(static_cast<Eigen::Index>(t)).transpose();
          for (std::size_t j = 0; j < n_e; ++j) {
            const Matrix& series = observed[j][w.record];
            for (std::size_t c = 0; c < n_out; ++c)
              obs(col * static_cast<Eigen::Index>(n_out) + static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) =
                  series(static_cast<Eigen::Index>(w.start + t), static_cast<Eigen::Index>(c));
          }
        }
      }
      const Vector c_d_diag = Vector::Constant(n_d, c_d);
      const std::uint64_t dropout_seed = derive_seed(state.seeds.dropout, {state.iteration});
      const DropoutMasks masks = make_dropout_masks(spec, L, B, dropout_seed);

      const detail::BatchEval before = detail::evaluate_members(spec, state.members, x, masks, dropout_seed, cfg.threads);
      if (!before.finite) throw NumericalError("update diverged: non-finite predictions before update");
      const double mismatch_before = data_mismatch(before.predictions, obs);
      if (cfg.lambda_scaled && state.iteration == 0) state.lambda = scaled_lambda(mismatch_before, c_d);

      StepTrace tr;
      tr.iteration = state.iteration + 1;
      tr.epoch = epoch + 1;
      tr.mismatch_before = mismatch_before;
      for (std::size_t attempt = 0;; ++attempt) {
        const StepResult step = enrml_step(state, before.predictions, obs, c_d_diag, cfg.route);
        detail::BatchEval after = detail::evaluate_members(spec, step.members, x, masks, dropout_seed, cfg.threads);
        const double mismatch_after =
            after.finite ? data_mismatch(after.predictions, obs) : std::numeric_limits<double>::infinity();
        const LambdaDecision decision = lambda_update(state.lambda, cfg.lambda_factor, mismatch_before,
                                                      std::isfinite(mismatch_after) ? mismatch_after
                                                                                    : std::numeric_limits<double>::max());
        const bool commit = decision.accepted || attempt >= cfg.max_retries;
        if (!commit) {
          state.lambda = decision.lambda;
          ++em.rejected;
          continue;
        }
        if (!after.finite) throw NumericalError("update diverged");
        tr.lambda = state.lambda;
        tr.attempts = attempt + 1;
        tr.accepted = decision.accepted;
        tr.jitter = step.jitter;
        tr.mismatch_after = mismatch_after;
        tr.spread = prediction_spread(after.predictions);
        if (decision.accepted) ++em.accepted;
        else ++em.rejected;
        state.members = step.members;
        for (std::size_t j = 0; j < n_e; ++j) state.aux[j].absorb(after.stats[j]);
        state.lambda = decision.lambda;
        break;
      }
      ++state.iteration;
      state.members = smooth_perturb(state.members, pcfg, derive_seed(state.seeds.smoothing, {state.iteration}),
                                     state.iteration);
      mismatch_sum += tr.mismatch_after;
      spread_sum += tr.spread;
      ++em.batches;
      result.trace.push_back(tr);
    }
    ++state.epoch;
    em.mismatch = static_cast<double>(mismatch_sum / em.batches);
    em.spread = static_cast<double>(spread_sum / em.batches);
    em.lambda = state.lambda;
    result.metrics.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(state, em);
  }
  result.state = std::move(state);
  return result;
}

inline TrainResult train(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& cfg,
                         const PerturbationConfig& pcfg, const TrainHooks& hooks = {}) {
  if (data.windows.windows.empty()) throw InvalidArgument("train: empty dataset");
  return train_from(init_ensemble(spec, cfg), data, cfg, pcfg, hooks);
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  Matrix mean;  // T x output_dim
  Matrix std;   // T x output_dim, across-member sample standard deviation
};

namespace detail {

inline void reduce_members(const std::vector<Matrix>& outs, Matrix& mean, Matrix& sd) {
  const std::size_t n = outs.size();
  mean = Matrix::Zero(outs[0].rows(), outs[0].cols());
  for (const auto& o : outs) mean += o;
  mean /= static_cast<double>(n);
  sd = Matrix::Zero(mean.rows(), mean.cols());
  if (n < 2) return;
  for (const auto& o : outs) sd.array() += (o - mean).array().square();
  sd = (sd / static_cast<double>(n - 1)).cwiseSqrt();
}

}  // namespace detail

// Infer-mode evaluation of every member on a batch; returns (mean, std) as
// (output_dim x steps*batch) matrices.
inline std::pair<Matrix, Matrix> predict_batch(const EnsembleState& state, const SequenceBatch& x,
                                               std::size_t threads = 1) {
  std::vector<Matrix> outs(state.size());
  parallel_for(state.size(), threads, [&](std::size_t j) {
    ForwardContext ctx;
    ctx.mode = Mode::infer;
    ctx.aux = &state.aux[j];
    outs[j] = forward(state.spec, state.member(j), x, ctx).values;
  });
  std::pair<Matrix, Matrix> r;
  detail::reduce_members(outs, r.first, r.second);
  return r;
}

// Ensemble mean and spread for one T x input_dim sequence.
inline Prediction predict(const EnsembleState& state, const Matrix& x, std::size_t threads = 1) {
  detail::require(static_cast<std::size_t>(x.cols()) == state.spec.input_dim,
                  "predict: input width does not match spec input_dim");
  auto [mean, sd] = predict_batch(state, SequenceBatch::from_sequence(x), threads);
  return {mean.transpose(), sd.transpose()};
}

// Predicts a long series by cutting it into consecutive non-overlapping
// windows of `length` (the last one may be shorter), evaluating each from a
// fresh LSTM state and stitching the results. length 0 means one window.
inline Prediction predict_stitched(const EnsembleState& state, const Matrix& x, std::size_t length,
                                   std::size_t threads = 1) {
  detail::require(static_cast<std::size_t>(x.cols()) == state.spec.input_dim,
                  "predict: input width does not match spec input_dim");
  const auto T = static_cast<std::size_t>(x.rows());
  detail::require(T >= 1, "predict: empty sequence");
  if (length == 0 || length >= T) return predict(state, x, threads);
  const std::size_t full = T / length;
  const std::size_t tail = T - full * length;
  const std::size_t out_dim = state.spec.output_dim;
  Prediction p{Matrix(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(out_dim)),
               Matrix(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(out_dim))};

  SequenceBatch xb(length, full, state.spec.input_dim);
  for (std::size_t b = 0; b < full; ++b)
    for (std::size_t t = 0; t < length; ++t)
      xb.values.col(static_cast<Eigen::Index>(t * full + b)) = x.row(static_cast<Eigen::Index>(b * length + t)).transpose();
  const auto [mean, sd] = predict_batch(state, xb, threads);
  for (std::size_t b = 0; b < full; ++b)
    for (std::size_t t = 0; t < length; ++t) {
      const auto row = static_cast<Eigen::Index>(b * length + t);
      const auto col = static_cast<Eigen::Index>(t * full + b);
      p.mean.row(row) = mean.col(col).transpose();
      p.std.row(row) = sd.col(col).transpose();
    }
  if (tail > 0) {
    const Prediction rest = predict(state, x.bottomRows(static_cast<Eigen::Index>(tail)), threads);
    p.mean.bottomRows(static_cast<Eigen::Index>(tail)) = rest.mean;
    p.std.bottomRows(static_cast<Eigen::Index>(tail)) = rest.std;
  }
  return p;
}

}  // namespace enlstm
