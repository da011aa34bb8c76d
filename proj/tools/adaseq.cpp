// Command-line driver: data preparation, training runs, checkpoint
// evaluation, gradient checking and sweep experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adaseq/experiment.hpp"
#include "adaseq/serialize.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
  cmd->add_option("--config", args.config, "JSON experiment config");
  cmd->add_option("--set", args.overrides, "dotted-path config override, e.g. --set train.seed=3");
  auto* out = cmd->add_option("--out", args.out, "output directory");
  if (out_required) out->required();
}

adaseq::ExperimentSpec load_spec(const CommonArgs& args) {
  adaseq::ExperimentSpec spec = adaseq::spec_from_json_file(args.config, args.overrides);
  if (!args.out.empty()) spec.out_dir = args.out;
  return spec;
}

int cmd_data_prepare(const CommonArgs& args) {
  adaseq::ExperimentSpec spec = load_spec(args);
  spec.data.validate();
  std::vector<std::string> warnings;
  adaseq::SequenceDataset ds = adaseq::prepare_data(spec.data, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::filesystem::create_directories(spec.out_dir);
  std::string cache = spec.out_dir + "/dataset.bin";
  adaseq::save_cache(cache, ds);
  std::ofstream cfg(spec.out_dir + "/resolved_config.json");
  cfg << adaseq::spec_to_json(spec);
  std::cout << "wrote " << cache << ": " << ds.sequences.size() << " sequences, "
            << ds.num_classes() << " classes, feature_dim " << ds.meta.feature_dim << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  adaseq::ExperimentSpec spec = load_spec(args);
  spec.sweep_variable.clear();
  spec.sweep_values.clear();
  return adaseq::run_experiment(spec);
}

int cmd_sweep(const CommonArgs& args) {
  adaseq::ExperimentSpec spec = load_spec(args);
  if (spec.sweep_variable.empty()) {
    throw adaseq::ConfigError("sweep requires sweep.variable and sweep.values in the config");
  }
  return adaseq::run_experiment(spec);
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split) {
  adaseq::Checkpoint ck = adaseq::load_checkpoint(checkpoint);
  adaseq::SequenceDataset ds = adaseq::load_cache(data);
  int split_id = adaseq::kTest;
  if (split == "train") split_id = adaseq::kTrain;
  else if (split == "validation" || split == "val") split_id = adaseq::kValidation;
  else if (split == "test") split_id = adaseq::kTest;
  else throw adaseq::ConfigError("unknown split '" + split + "'");
  adaseq::EvalResult res = adaseq::evaluate_split(ck.params, ck.config, ds, split_id);
  std::printf("split %s: cross_entropy %.6f  avg_p %.4f  eff_mults %lld\n", split.c_str(), res.ce,
              res.avg_p, static_cast<long long>(res.eff_mults));
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, double step, double tolerance) {
  adaseq::ExperimentSpec spec = adaseq::spec_from_json_file(args.config, args.overrides);
  adaseq::SequenceDataset ds = adaseq::prepare_data(spec.data);
  adaseq::ModelConfig mcfg = spec.model;
  mcfg.input_dim = ds.meta.feature_dim;
  mcfg.num_classes = ds.num_classes();
  mcfg.validate();
  adaseq::ModelParams params = adaseq::ModelParams::init(mcfg);

  std::vector<const adaseq::Sequence*> batch;
  for (size_t i : ds.split_indices(adaseq::kTrain)) {
    batch.push_back(&ds.sequences[i]);
    if (batch.size() == 2) break;
  }
  adaseq::FdReport report = adaseq::finite_diff_check(mcfg, params, batch, step, tolerance);
  for (const auto& entry : report.params) {
    std::printf("%-12s max_rel_err %.3e  checked %d  flagged %d  failed %d\n", entry.name.c_str(),
                entry.max_rel_err, entry.checked, entry.flagged, entry.failed);
  }
  std::printf("total: checked %d  flagged %d  failed %d  max_rel_err %.3e (tol %.1e, step %.1e)\n",
              report.total_checked, report.total_flagged, report.total_failed, report.max_rel_err,
              report.tolerance, report.step);
  return report.pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depth-adaptive LSTM experiment driver"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, sweep_args, gradcheck_args;
  std::string eval_checkpoint, eval_data, eval_split = "test";
  double gc_step = 1e-5, gc_tol = 1e-4;

  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);
  auto* prepare_cmd = data_cmd->add_subcommand("prepare", "build and cache a dataset");
  add_common(prepare_cmd, prepare_args);

  auto* train_cmd = app.add_subcommand("train", "train one model and write artifacts");
  add_common(train_cmd, train_args);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a cached dataset");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset cache")->required();
  eval_cmd->add_option("--split", eval_split, "train | validation | test");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck_cmd, gradcheck_args, /*out_required=*/false);
  gradcheck_cmd->add_option("--step", gc_step, "finite-difference step");
  gradcheck_cmd->add_option("--tol", gc_tol, "relative-error tolerance");

  auto* sweep_cmd = app.add_subcommand("sweep", "train across sweep.values");
  add_common(sweep_cmd, sweep_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare_cmd->parsed()) return cmd_data_prepare(prepare_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_checkpoint, eval_data, eval_split);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_args, gc_step, gc_tol);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
