#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "enlstm/data.hpp"

using namespace enlstm;

namespace {

const std::filesystem::path kFixtures = ENLSTM_FIXTURES;

WellRecord one_channel(const std::string& id, std::vector<double> v) {
  WellRecord r;
  r.well_id = id;
  r.channels = {"c"};
  r.values.resize(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    r.depth.push_back(static_cast<double>(i));
    r.values(static_cast<Eigen::Index>(i), 0) = v[i];
  }
  return r;
}

// Memoryless least squares from the current inputs to the targets, fitted on
// wells 1.. and scored on well 0 in normalized units.
double memoryless_ls_mse(const SynthSpec& s) {
  const auto wells = synth_generate(s);
  auto channels = synth_input_names(s.n_in);
  const auto targets = synth_target_names(s.n_out);
  channels.insert(channels.end(), targets.begin(), targets.end());
  std::vector<WellRecord> train(wells.begin() + 1, wells.end());
  const ChannelStats stats = zscore_fit(train, channels);
  auto design = [&](const WellRecord& w) {
    const WellRecord z = zscore_apply(w, stats);
    Matrix x(z.values.rows(), static_cast<Eigen::Index>(s.n_in) + 1);
    x << z.columns(synth_input_names(s.n_in)), Matrix::Ones(z.values.rows(), 1);
    return std::pair{x, Matrix(z.columns(targets))};
  };
  Eigen::Index rows = 0;
  for (const auto& w : train) rows += w.values.rows();
  Matrix x(rows, static_cast<Eigen::Index>(s.n_in) + 1), y(rows, static_cast<Eigen::Index>(s.n_out));
  Eigen::Index at = 0;
  for (const auto& w : train) {
    auto [xi, yi] = design(w);
    x.middleRows(at, xi.rows()) = xi;
    y.middleRows(at, yi.rows()) = yi;
    at += xi.rows();
  }
  const Matrix beta = x.colPivHouseholderQr().solve(y);
  auto [xt, yt] = design(wells[0]);
  return mse(Matrix(xt * beta), yt);
}

}  // namespace

TEST(Data, NonMonotoneDepthIsReportedWithItsLine) {
  try {
    load_csv(kFixtures / "nonmonotone.csv");
    FAIL() << "expected a throw";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("non-monotone depth at line 4"), std::string::npos) << e.what();
  }
  std::istringstream in("well_id,depth,x\nA,2,1\nA,1,1\n");
  try {
    parse_csv(in);
    FAIL() << "expected a throw";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("non-monotone depth at line 3"), std::string::npos) << e.what();
  }
}

TEST(Data, RowsWithMissingValuesAreDroppedAndCounted) {
  LoadReport report;
  const auto wells = load_csv(kFixtures / "missing.csv", &report);
  EXPECT_EQ(report.rows_read, 6u);
  EXPECT_EQ(report.rows_rejected, 2u);
  ASSERT_EQ(wells.size(), 2u);
  EXPECT_EQ(wells[0].well_id, "A");
  EXPECT_EQ(wells[0].depth, (std::vector<double>{100.0, 101.5}));
  EXPECT_EQ(wells[1].size(), 2u);
  EXPECT_EQ(report.irregular_spacing, std::vector<std::string>{});
}

TEST(Data, HeaderProblemsAreParseErrors) {
  std::istringstream no_depth("well_id,x\nA,1\n");
  EXPECT_THROW(parse_csv(no_depth), ParseError);
  std::istringstream dup("well_id,depth,x,x\nA,1,1,1\n");
  EXPECT_THROW(parse_csv(dup), ParseError);
  std::istringstream ragged("well_id,depth,x\nA,1\n");
  EXPECT_THROW(parse_csv(ragged), ParseError);
  std::istringstream text("well_id,depth,x\nA,1,abc\n");
  EXPECT_THROW(parse_csv(text), ParseError);
  EXPECT_THROW(load_csv(kFixtures / "does_not_exist.csv"), ParseError);
}

TEST(Data, WriteThenReadRoundTrips) {
  SynthSpec s;
  s.n_wells = 2;
  s.length = 50;
  const auto wells = synth_generate(s);
  std::stringstream buf;
  write_csv(buf, wells);
  const auto back = parse_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].values, wells[1].values);
  EXPECT_EQ(back[1].depth, wells[1].depth);
}

TEST(Data, ZscoreExample) {
  const WellRecord r = one_channel("A", {1, 2, 3});
  const ChannelStats st = zscore_fit(std::vector<WellRecord>{r}, {"c"});
  EXPECT_DOUBLE_EQ(st.scales[0].mean, 2.0);
  EXPECT_NEAR(st.scales[0].stddev, 0.816496580927726, 1e-15);
  const WellRecord z = zscore_apply(r, st);
  EXPECT_NEAR(z.values(0, 0), -1.224744871391589, 1e-15);
  EXPECT_NEAR(z.values(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(z.values(2, 0), 1.224744871391589, 1e-15);
}

TEST(Data, ZscoreRejectsAConstantChannel) {
  const auto wells = load_csv(kFixtures / "constant.csv");
  try {
    zscore_fit(wells, {"GR", "DT"});
    FAIL() << "expected a throw";
  } catch (const InvalidArgument& e) {
    EXPECT_STREQ(e.what(), "degenerate channel 'DT'");
  }
}

TEST(Data, WindowStarts) {
  EXPECT_EQ(window_starts(210, 130, 40), (std::vector<std::size_t>{0, 40, 80}));
  EXPECT_EQ(window_starts(130, 130, 40), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(window_starts(129, 130, 40).empty());
}

TEST(Data, WindowsSliceInputsAndTargets) {
  SynthSpec s;
  s.n_wells = 1;
  s.length = 210;
  const auto wells = synth_generate(s);
  const WindowedBatch b = window(wells[0], {"x0", "x1"}, {"y2"}, 130, 40, 7);
  ASSERT_EQ(b.windows.size(), 3u);
  EXPECT_EQ(b.windows[2].start, 80u);
  EXPECT_EQ(b.windows[2].record, 7u);
  EXPECT_EQ(b.windows[2].inputs.rows(), 130);
  EXPECT_EQ(b.windows[2].inputs(0, 1), wells[0].values(80, 1));
  EXPECT_EQ(b.windows[2].targets(129, 0), wells[0].values(209, 6));
  EXPECT_EQ(window(wells[0], {"x0"}, {"y0"}, 300, 40).short_series, 1u);
}

TEST(Data, LeaveOneOutFoldCounts) {
  for (std::size_t n : {2u, 6u, 14u}) {
    std::vector<WellRecord> wells;
    for (std::size_t i = 0; i < n; ++i) wells.push_back(one_channel("W" + std::to_string(100 + i), {1, 2}));
    const auto folds = loo_splits(wells);
    ASSERT_EQ(folds.size(), n);
    for (const auto& f : folds) EXPECT_EQ(f.train.size(), n - 1);
  }
  EXPECT_THROW(loo_splits({one_channel("A", {1, 2})}), InvalidArgument);
}

TEST(Data, FoldsFollowWellIdOrder) {
  const std::vector<WellRecord> wells{one_channel("B", {1, 2}), one_channel("A", {1, 2})};
  const auto folds = loo_splits(wells);
  EXPECT_EQ(folds[0].test, 1u);
  EXPECT_EQ(folds[1].test, 0u);
}

TEST(Data, SynthesisShapeAndDeterminism) {
  SynthSpec s;
  const auto a = synth_generate(s);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a[0].well_id, "W01");
  EXPECT_EQ(a[5].well_id, "W06");
  EXPECT_EQ(a[0].values.rows(), 800);
  EXPECT_EQ(a[0].values.cols(), 7);
  EXPECT_EQ(a[2].values, synth_generate(s)[2].values);
  s.seed = 1;
  EXPECT_NE(a[2].values, synth_generate(s)[2].values);
}

TEST(Data, NoiselessTargetsFollowTheLaggedMapping) {
  SynthSpec s;
  s.noise = 0.0;
  s.n_wells = 1;
  s.length = 60;
  const SynthModel m = SynthModel::from_spec(s);
  const WellRecord w = synth_generate(s)[0];
  for (std::size_t k = 0; k < s.n_out; ++k)
    for (std::size_t t : {0u, 4u, 19u, 20u, 59u}) {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.n_in; ++i)
        for (std::size_t l = 0; l < s.lags.size(); ++l) {
          const std::size_t src = t < s.lags[l] ? 0 : t - s.lags[l];
          const double x = w.values(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(i));
          acc += m.weights[(k * s.n_in + i) * s.lags.size() + l] * (x - m.in_offset[i]) / m.in_scale[i];
        }
      const double expect = m.out_offset[k] + m.out_scale[k] * std::tanh(acc);
      EXPECT_NEAR(w.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s.n_in + k)), expect, 1e-12);
    }
}

TEST(Data, MemorylessFitCannotReachTheNoiseFloor) {
  // The noise floor in normalized units is below 0.0025; without memory a
  // linear fit stays far above it.
  SynthSpec s;
  EXPECT_GT(memoryless_ls_mse(s), 0.2);
  s.lags = {0, 3, 8};
  EXPECT_GT(memoryless_ls_mse(s), 0.2);
}

TEST(Data, MseExamples) {
  const std::vector<double> a{0, 0}, b{1, 3};
  EXPECT_DOUBLE_EQ(mse(a, b), 5.0);
  EXPECT_THROW(mse(std::vector<double>{1.0}, b), InvalidArgument);
}
