#include <gtest/gtest.h>

#include <random>

#include "enlstm/enrml.hpp"

using namespace enlstm;

namespace {

// Scalar linear-Gaussian problem: prior N(0, 1), g(m) = 2 m, C_D = 1, d = 2.
struct Scalar {
  Matrix m, d;
};

Scalar scalar_problem(Eigen::Index n_e, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Scalar s{Matrix(1, n_e), Matrix(1, n_e)};
  for (Eigen::Index j = 0; j < n_e; ++j) s.m(0, j) = normal(eng);
  for (Eigen::Index j = 0; j < n_e; ++j) s.d(0, j) = 2.0 + normal(eng);
  return s;
}

// A tiny sequence task: y(t) = 0.8 x(t) - 0.5 x(t-1).
TrainingSet tiny_task(std::size_t n_series = 2, std::size_t T = 60) {
  std::vector<Matrix> xs, ys;
  for (std::size_t r = 0; r < n_series; ++r) {
    Matrix x(T, 1), y(T, 1);
    for (std::size_t t = 0; t < T; ++t) x(t, 0) = std::sin(0.37 * t + r) + 0.3 * std::cos(1.3 * t);
    for (std::size_t t = 0; t < T; ++t) y(t, 0) = 0.8 * x(t, 0) - 0.5 * (t > 0 ? x(t - 1, 0) : 0.0);
    xs.push_back(x);
    ys.push_back(y);
  }
  return TrainingSet::from_series(xs, ys, 12, 6);
}

NetworkSpec tiny_spec() {
  NetworkTemplate t;
  t.lstm_hidden = 4;
  t.dense_hidden = 3;
  t.dropout = 0.1;
  return t.instantiate(1, 1);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.n_realizations = 12;
  c.batch_size = 4;
  c.epochs = 3;
  c.lambda_scaled = true;
  c.seed = 17;
  return c;
}

PerturbationConfig tiny_perturb() {
  PerturbationConfig p;
  p.channel_stats = {{0.5, 2.0}};
  return p;
}

}  // namespace

TEST(Enrml, LinearGaussianPosteriorMean) {
  const Scalar s = scalar_problem(2000, 3);
  const StepResult r = enrml_step(s.m, s.m, Vector::Ones(1), 0.0, 2.0 * s.m, s.d, Vector::Ones(1));
  EXPECT_NEAR(r.members.mean(), 0.8, 0.05);
  // posterior variance 1 / (1 + 4)
  EXPECT_NEAR(covariance(r.members)(0, 0), 0.2, 0.03);
}

TEST(Enrml, DampingShrinksTheStep) {
  const Scalar s = scalar_problem(500, 4);
  double last = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 1.0, 10.0, 100.0}) {
    const StepResult r = enrml_step(s.m, s.m, Vector::Ones(1), lambda, 2.0 * s.m, s.d, Vector::Ones(1));
    const double moved = (r.members - s.m).norm();
    EXPECT_LT(moved, last) << "lambda " << lambda;
    last = moved;
  }
}

TEST(Enrml, IdenticalMembersAreLeftAlone) {
  const Matrix m = Matrix::Constant(3, 5, 0.4);
  const Matrix g = Matrix::Constant(4, 5, 1.0);
  const Matrix d = Matrix::Constant(4, 5, 2.0);
  for (auto route : {UpdateRoute::dense, UpdateRoute::subspace}) {
    const StepResult r = enrml_step(m, m, Vector::Ones(3), 1.0, g, d, Vector::Constant(4, 0.1), route);
    EXPECT_TRUE(r.members.allFinite());
    EXPECT_LE((r.members - m).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Enrml, RouteSelection) {
  const Scalar s = scalar_problem(10, 5);
  EXPECT_EQ(enrml_step(s.m, s.m, Vector::Ones(1), 1.0, s.m, s.d, Vector::Ones(1)).route, UpdateRoute::dense);
  const Matrix m = Matrix::Random(30, 10);
  const Matrix g = Matrix::Random(40, 10);
  EXPECT_EQ(enrml_step(m, m, Vector::Ones(30), 1.0, g, g, Vector::Ones(40)).route, UpdateRoute::subspace);
  EXPECT_EQ(enrml_step(m, m, Vector::Ones(30), 1.0, g, g, Vector::Zero(40)).route, UpdateRoute::dense);
  EXPECT_THROW(enrml_step(m, m, Vector::Ones(30), 1.0, g, g, Vector::Zero(40), UpdateRoute::subspace),
               InvalidArgument);
}

TEST(Enrml, RejectsDegenerateInput) {
  const Matrix one = Matrix::Zero(2, 1);
  EXPECT_THROW(enrml_step(one, one, Vector::Ones(2), 1.0, one, one, Vector::Ones(2)), InvalidArgument);
  const Scalar s = scalar_problem(4, 6);
  EXPECT_THROW(enrml_step(s.m, s.m, Vector::Ones(1), -1.0, s.m, s.d, Vector::Ones(1)), InvalidArgument);
  EXPECT_THROW(enrml_step(s.m, s.m, Vector::Ones(2), 1.0, s.m, s.d, Vector::Ones(1)), InvalidArgument);
}

TEST(Enrml, LambdaScheduleExamples) {
  const LambdaDecision up = lambda_update(1.0, 10.0, 1.0, 1.5);
  EXPECT_FALSE(up.accepted);
  EXPECT_DOUBLE_EQ(up.lambda, 10.0);
  const LambdaDecision down = lambda_update(1.0, 10.0, 1.0, 0.5);
  EXPECT_TRUE(down.accepted);
  EXPECT_DOUBLE_EQ(down.lambda, 0.1);
  EXPECT_DOUBLE_EQ(lambda_update(1e-8, 10.0, 1.0, 0.5).lambda, kLambdaFloor);
  EXPECT_FALSE(lambda_update(1.0, 10.0, 1.0, 1.0).accepted);
}

TEST(Enrml, ScaledLambdaExamples) {
  EXPECT_DOUBLE_EQ(scaled_lambda(1.0, 4e-4), 1000.0);
  EXPECT_DOUBLE_EQ(scaled_lambda(0.02, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(scaled_lambda(0.0, 1.0), kLambdaFloor);
}

TEST(Enrml, MismatchAndSpreadExamples) {
  Matrix g(2, 2);
  g << 0, 2,
       0, 2;
  EXPECT_DOUBLE_EQ(data_mismatch(g, Matrix::Constant(2, 2, 1.0)), 1.0);
  EXPECT_DOUBLE_EQ(prediction_spread(g), std::sqrt(2.0));
}

TEST(Enrml, PredictReducesOverMembers) {
  NetworkSpec s;
  s.input_dim = 1;
  s.output_dim = 1;
  s.layers = {DenseLayer{1, Activation::linear}};
  EnsembleState st;
  st.spec = s;
  st.members.resize(2, 2);
  st.members << 0, 0,
                0, 2;  // (W, b) per member: outputs 0 and 2
  st.aux.assign(2, NetworkAux::initial(s));
  const Prediction p = predict(st, Matrix::Constant(5, 1, 3.0));
  EXPECT_EQ(p.mean, Matrix::Ones(5, 1));
  EXPECT_TRUE(p.std.isApprox(Matrix::Constant(5, 1, std::sqrt(2.0))));
}

TEST(Enrml, StitchedPredictionRestartsEveryWindow) {
  TrainConfig c = tiny_config();
  const EnsembleState st = init_ensemble(tiny_spec(), c);
  Matrix x(25, 1);
  for (Eigen::Index t = 0; t < 25; ++t) x(t, 0) = std::cos(0.4 * t);
  const Prediction whole = predict_stitched(st, x, 10);
  EXPECT_TRUE(whole.mean.middleRows(10, 10).isApprox(predict(st, Matrix(x.middleRows(10, 10))).mean));
  EXPECT_TRUE(whole.mean.bottomRows(5).isApprox(predict(st, Matrix(x.bottomRows(5))).mean));
  EXPECT_EQ(predict_stitched(st, x, 0).mean, predict(st, x).mean);
}

TEST(Enrml, InitialEnsembleFollowsThePrior) {
  TrainConfig c;
  c.n_realizations = 50;
  c.prior_std = 0.1;
  const EnsembleState st = init_ensemble(NetworkTemplate{}.instantiate(11, 2), c);
  EXPECT_EQ(st.size(), 50u);
  EXPECT_EQ(st.members, st.priors);
  EXPECT_NEAR(std::sqrt(st.members.array().square().mean()), 0.1, 0.005);
  EXPECT_NO_THROW(st.validate());
}

TEST(Enrml, TrainingReducesTheMismatch) {
  const TrainResult r = train(tiny_spec(), tiny_task(), tiny_config(), tiny_perturb());
  ASSERT_EQ(r.metrics.size(), 3u);
  EXPECT_LT(r.trace.back().mismatch_after, r.trace.front().mismatch_before);
  EXPECT_EQ(r.metrics.back().epoch, 3u);
  EXPECT_EQ(r.state.epoch, 3u);
  std::size_t steps = 0;
  for (const auto& m : r.metrics) steps += m.batches;
  EXPECT_EQ(steps, r.trace.size());
  EXPECT_EQ(r.state.iteration, r.trace.size());
}

TEST(Enrml, TrainingIsReproducibleAndThreadIndependent) {
  TrainConfig c = tiny_config();
  const TrainResult a = train(tiny_spec(), tiny_task(), c, tiny_perturb());
  c.threads = 4;
  const TrainResult b = train(tiny_spec(), tiny_task(), c, tiny_perturb());
  EXPECT_EQ(a.state.members, b.state.members);
  EXPECT_EQ(a.state.lambda, b.state.lambda);
  c.seed = 18;
  const TrainResult other = train(tiny_spec(), tiny_task(), c, tiny_perturb());
  EXPECT_NE(a.state.members, other.state.members);
}

TEST(Enrml, ContinuingEqualsOneLongRunWhenObservationsAreRedrawnPerEpoch) {
  TrainConfig c = tiny_config();
  c.reperturb_each_epoch = true;
  const TrainResult full = train(tiny_spec(), tiny_task(), c, tiny_perturb());
  TrainConfig first = c;
  first.epochs = 1;
  const TrainResult part = train(tiny_spec(), tiny_task(), first, tiny_perturb());
  TrainConfig rest = c;
  rest.epochs = 2;
  const TrainResult resumed = train_from(part.state, tiny_task(), rest, tiny_perturb());
  EXPECT_EQ(full.state.members, resumed.state.members);
}

TEST(Enrml, EpochHookSeesEveryEpoch) {
  std::vector<std::size_t> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EnsembleState& s, const EpochMetrics& m) {
    EXPECT_EQ(s.epoch, m.epoch);
    seen.push_back(m.epoch);
  };
  train(tiny_spec(), tiny_task(), tiny_config(), tiny_perturb(), hooks);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Enrml, TrainingRejectsBadSetups) {
  TrainConfig c = tiny_config();
  c.eps_real_std = 0.0;
  EXPECT_THROW(train(tiny_spec(), tiny_task(), c, tiny_perturb()), InvalidArgument);
  PerturbationConfig p = tiny_perturb();
  p.channel_stats.clear();
  EXPECT_THROW(train(tiny_spec(), tiny_task(), tiny_config(), p), InvalidArgument);
  EXPECT_THROW(train(NetworkTemplate{}.instantiate(2, 1), tiny_task(), tiny_config(), tiny_perturb()),
               InvalidArgument);
  EXPECT_THROW(train(tiny_spec(), TrainingSet{}, tiny_config(), tiny_perturb()), InvalidArgument);
}
