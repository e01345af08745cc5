#include <gtest/gtest.h>

#include "enlstm/network.hpp"
#include "support/gen.hpp"

using namespace enlstm;

namespace {

Vector params_for(gen::Gen& g, const NetworkSpec& spec, double sd = 0.5) {
  return g.vector(static_cast<Eigen::Index>(param_count(spec)), sd);
}

ForwardContext infer(const NetworkAux& aux) {
  ForwardContext ctx;
  ctx.aux = &aux;
  return ctx;
}

}  // namespace

TEST(NetworkProperty, LayoutTilesTheParameterVector) {
  gen::for_all(300, 11, [](gen::Gen& g) {
    const NetworkSpec spec = g.spec();
    std::size_t next = 0;
    for (const auto& ll : layout(spec)) {
      EXPECT_EQ(ll.offset, next);
      std::size_t inner = ll.offset;
      for (const auto& b : ll.blocks) {
        EXPECT_EQ(b.offset, inner);
        inner += b.size();
      }
      EXPECT_EQ(inner, ll.offset + ll.size);
      next += ll.size;
    }
    EXPECT_EQ(next, param_count(spec));
  });
}

TEST(NetworkProperty, LstmOutputIsBounded) {
  gen::for_all(200, 12, [](gen::Gen& g) {
    NetworkSpec spec;
    spec.input_dim = g.size(1, 4);
    spec.output_dim = g.size(1, 6);
    spec.layers = {LstmLayer{spec.output_dim}};
    const Vector p = params_for(g, spec, 3.0);
    const Matrix y = forward(spec, as_span(p), g.matrix(g.size(1, 40), spec.input_dim, 5.0));
    EXPECT_LE(y.cwiseAbs().maxCoeff(), 1.0);
  });
}

TEST(NetworkProperty, OutputsDoNotDependOnLaterSteps) {
  gen::for_all(150, 13, [](gen::Gen& g) {
    const NetworkSpec spec = g.spec(false);
    const Vector p = params_for(g, spec);
    const NetworkAux aux = NetworkAux::initial(spec);
    const Matrix x = g.matrix(g.size(2, 30), spec.input_dim);
    const auto t = static_cast<Eigen::Index>(g.size(1, x.rows() - 1));
    const Matrix full = forward(spec, as_span(p), x, infer(aux));
    const Matrix head = forward(spec, as_span(p), Matrix(x.topRows(t)), infer(aux));
    EXPECT_LE((full.topRows(t) - head).cwiseAbs().maxCoeff(), 1e-12);
  });
}

TEST(NetworkProperty, InferenceIsDeterministic) {
  gen::for_all(150, 14, [](gen::Gen& g) {
    const NetworkSpec spec = g.spec();
    const Vector p = params_for(g, spec);
    const NetworkAux aux = NetworkAux::initial(spec);
    const Matrix x = g.matrix(g.size(1, 20), spec.input_dim);
    EXPECT_EQ(forward(spec, as_span(p), x, infer(aux)), forward(spec, as_span(p), x, infer(aux)));
  });
}

TEST(NetworkProperty, TrainModeRepeatsForTheSameDropoutSeed) {
  gen::for_all(150, 15, [](gen::Gen& g) {
    const NetworkSpec spec = g.spec();
    const Vector p = params_for(g, spec);
    const SequenceBatch x = SequenceBatch::from_sequence(g.matrix(g.size(1, 20), spec.input_dim));
    ForwardContext ctx;
    ctx.mode = Mode::train;
    ctx.dropout_seed = g.eng();
    EXPECT_EQ(forward(spec, as_span(p), x, ctx).values, forward(spec, as_span(p), x, ctx).values);
  });
}

TEST(NetworkProperty, BatchedEqualsOneAtATimeWithoutBatchnorm) {
  gen::for_all(100, 16, [](gen::Gen& g) {
    NetworkTemplate t;
    t.lstm_hidden = g.size(1, 5);
    t.dense_hidden = g.size(0, 4);
    t.batchnorm = false;
    t.dropout = 0.0;
    const NetworkSpec spec = t.instantiate(g.size(1, 3), g.size(1, 3));
    const Vector p = params_for(g, spec);
    const std::size_t steps = g.size(1, 15);
    const std::size_t batch = g.size(1, 6);
    SequenceBatch x(steps, batch, spec.input_dim);
    x.values = g.matrix(x.values.rows(), x.values.cols());
    const SequenceBatch y = forward(spec, as_span(p), x);
    for (std::size_t b = 0; b < batch; ++b) {
      const Matrix single = forward(spec, as_span(p), x.sequence(b));
      EXPECT_LE((y.sequence(b) - single).cwiseAbs().maxCoeff(), 1e-12);
    }
  });
}

TEST(NetworkProperty, ZeroDropoutTrainMatchesInferWithoutBatchnorm) {
  gen::for_all(100, 17, [](gen::Gen& g) {
    NetworkSpec spec;
    spec.input_dim = g.size(1, 3);
    spec.output_dim = g.size(1, 3);
    spec.layers = {LstmLayer{g.size(1, 5)}, DropoutLayer{0.0}, DenseLayer{spec.output_dim, Activation::linear}};
    const Vector p = params_for(g, spec);
    const SequenceBatch x = SequenceBatch::from_sequence(g.matrix(g.size(1, 20), spec.input_dim));
    ForwardContext train;
    train.mode = Mode::train;
    train.dropout_seed = g.eng();
    EXPECT_EQ(forward(spec, as_span(p), x, train).values, forward(spec, as_span(p), x).values);
  });
}
