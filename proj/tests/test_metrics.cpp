#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "adaseq/experiment.hpp"
#include "adaseq/metrics.hpp"
#include "adaseq/train.hpp"

using namespace adaseq;

TEST_CASE("cost model checkpoints at D = 40") {
  CHECK(gated_cell_mults(1.0, 40) == 12880);
  CHECK(gated_cell_mults(0.5, 40) == 3280);
  CHECK(ungated_cell_mults(40) == 12800);
}

TEST_CASE("cost is monotone in p and meets the ungated cost plus 2D at p = 1") {
  const int D = 40;
  int64_t prev = 0;
  for (double p = 0.01; p <= 1.0; p += 0.01) {
    int64_t cost = gated_cell_mults(p, D);
    CHECK(cost >= prev);
    prev = cost;
  }
  CHECK(gated_cell_mults(1.0, D) == ungated_cell_mults(D) + 2 * D);
}

TEST_CASE("portion summary of a frozen zero portion gate is exactly 0.5") {
  SequenceDataset ds = synth_generate(0.5, 20, 12, 4, 3, 3);
  split_dataset(ds, 3);
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 2;
  cfg.input_dim = 4;
  cfg.num_classes = 3;
  cfg.seed = 4;
  ModelParams params = ModelParams::init(cfg);
  auto zero_portion = [](CellParams& c) {
    c.Wp = Tensor::zeros(1, c.dim());
    c.Up = Tensor::zeros(1, c.dim());
    c.bp = Tensor::zeros(1, 1);
  };
  for (auto& c : params.bottom) zero_portion(c);
  zero_portion(*params.top);

  EvalResult eval = evaluate_split(params, cfg, ds, kValidation);
  TrainReport report;
  report.final_val_p = eval.p_values;
  auto rows = portion_summary({{0.5, &report}});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].avg_p == 0.5);
}

TEST_CASE("cumulative training cost equals the per-step sum exactly") {
  SequenceDataset ds = synth_generate(0.5, 10, 12, 4, 3, 7);
  split_dataset(ds, 7);

  SUBCASE("gated model, frozen parameters") {
    ModelConfig cfg;
    cfg.arch = Arch::da_lstm;
    cfg.hidden = 5;
    cfg.cells = 2;
    cfg.input_dim = 4;
    cfg.num_classes = 3;
    cfg.seed = 8;
    TrainConfig tcfg;
    tcfg.learning_rate = 0.0;  // frozen: every epoch repeats the same forward costs
    tcfg.max_epochs = 3;
    tcfg.patience = 10;
    tcfg.record_wall = false;
    TrainOutcome out = train(cfg, tcfg, ds);

    ModelParams params = ModelParams::init(cfg);
    int64_t per_epoch = 0;
    for (size_t i : ds.split_indices(kTrain)) {
      ForwardResult fwd = forward_sequence(params, cfg, ds.sequences[i].inputs);
      for (const StepTrace& st : fwd.traces) per_epoch += st.total_mults();
    }
    REQUIRE(out.report.epochs.size() == 3);
    for (size_t k = 0; k < 3; ++k) {
      CHECK(out.report.epochs[k].cum_eff_mults == static_cast<int64_t>(k + 1) * per_epoch);
    }
  }

  SUBCASE("ungated model, closed form") {
    ModelConfig cfg;
    cfg.arch = Arch::deep_transition_lstm;
    cfg.hidden = 5;
    cfg.cells = 3;
    cfg.input_dim = 4;
    cfg.num_classes = 3;
    cfg.seed = 9;
    TrainConfig tcfg;
    tcfg.max_epochs = 2;
    tcfg.patience = 10;
    tcfg.record_wall = false;
    TrainOutcome out = train(cfg, tcfg, ds);
    int64_t train_seqs = static_cast<int64_t>(ds.split_indices(kTrain).size());
    int64_t per_epoch = train_seqs * 10 * 3 * ungated_cell_mults(5);
    REQUIRE(out.report.epochs.size() == 2);
    CHECK(out.report.epochs[0].cum_eff_mults == per_epoch);
    CHECK(out.report.epochs[1].cum_eff_mults == 2 * per_epoch);
    CHECK(out.report.total_eff_mults == 2 * per_epoch);
  }
}

TEST_CASE("report CSV round trip is lossless for finite values") {
  TrainReport report;
  EpochRow row1{1, 1.0 / 3.0, 0.123456789012345678, 0.55, 123456789012345, 0.0};
  EpochRow row2{2, 1e-17, 3.2581, 1.0, 223456789012345, 1.5};
  report.epochs = {row1, row2};

  std::string path =
      (std::filesystem::temp_directory_path() / "adaseq_report_roundtrip.csv").string();
  write_report_csv(path, report);
  std::vector<EpochRow> rows = parse_report_csv(path);
  std::filesystem::remove(path);

  REQUIRE(rows.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(rows[i].epoch == report.epochs[i].epoch);
    CHECK(rows[i].train_ce == report.epochs[i].train_ce);
    CHECK(rows[i].val_ce == report.epochs[i].val_ce);
    CHECK(rows[i].avg_p == report.epochs[i].avg_p);
    CHECK(rows[i].cum_eff_mults == report.epochs[i].cum_eff_mults);
    CHECK(rows[i].wall_seconds == report.epochs[i].wall_seconds);
  }
}

TEST_CASE("comparison table carries absent-by-design baselines") {
  TrainReport report;
  report.epochs.push_back({1, 1.5, 1.4, 0.6, 1000, 0.0});
  report.test_ce = 0.9;
  report.convergence_epoch = 1;
  report.total_eff_mults = 1000;
  auto rows = comparison_rows({{"da_lstm", &report}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == "da_lstm");
  CHECK(rows[0].status == "ok");
  CHECK(rows[1].method == "phased_lstm");
  CHECK(rows[1].status != "ok");
  CHECK(rows[2].method == "clockwork_rnn");
  CHECK(rows[2].status != "ok");
}
