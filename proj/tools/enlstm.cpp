#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "enlstm/config.hpp"
#include "enlstm/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory (default: config output_dir)");
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--threads", c.threads, "worker cap; results do not depend on it")->check(CLI::PositiveNumber);
}

std::pair<enlstm::ExperimentConfig, enlstm::RunOptions> resolve(const Common& c) {
  enlstm::ExperimentConfig cfg = enlstm::load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  enlstm::RunOptions o;
  o.out = c.out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(c.out);
  o.threads = c.threads;
  o.log = &std::cout;
  return {cfg, o};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble-trained LSTM well-log synthesis"};
  app.require_subcommand(1);

  Common synth_args, train_args, loo_args, predict_args;
  auto* synth = app.add_subcommand("synth", "write the synthetic well dataset as CSV");
  add_common(synth, synth_args);
  auto* train = app.add_subcommand("train", "train every cascade stage on all (or the listed) wells");
  add_common(train, train_args);
  auto* loo = app.add_subcommand("eval-loo", "leave-one-out evaluation over folds and repeats");
  add_common(loo, loo_args);
  auto* predict = app.add_subcommand("predict", "predict target logs for the wells in a CSV file");
  add_common(predict, predict_args);
  std::string checkpoint_dir, input_csv;
  predict->add_option("--checkpoint", checkpoint_dir, "directory written by train")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--input", input_csv, "CSV with the input channels")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto [cfg, o] = resolve(synth_args);
      enlstm::cmd_synth(cfg, o);
    } else if (*train) {
      auto [cfg, o] = resolve(train_args);
      enlstm::cmd_train(cfg, o);
    } else if (*loo) {
      auto [cfg, o] = resolve(loo_args);
      enlstm::cmd_eval_loo(cfg, o);
    } else if (*predict) {
      auto [cfg, o] = resolve(predict_args);
      enlstm::cmd_predict(cfg, checkpoint_dir, input_csv, o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
