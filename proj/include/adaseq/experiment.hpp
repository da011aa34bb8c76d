#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adaseq/train.hpp"

namespace adaseq {

// Where sequences come from: the synthetic generator, a PAMAP2 directory, or
// a previously written dataset cache. Exactly one source.
struct DataSpec {
  std::string source = "synth";  // synth | pamap2 | cache
  double r = 0.5;
  int n = 200;
  uint64_t seed = 7;
  int synth_sequences = 300;
  int synth_features = 8;
  int synth_classes = 5;
  std::string pamap2_dir;
  std::string cache_path;

  void validate() const;
};

struct ExperimentSpec {
  ModelConfig model;  // input_dim / num_classes are resolved from the data
  TrainConfig train;
  DataSpec data;
  std::string sweep_variable;  // "", "r" or "m"
  std::vector<double> sweep_values;
  std::string out_dir;

  void validate() const;
};

// Loads or generates sequences, assigns splits, and standardizes PAMAP2
// features with training-split statistics.
SequenceDataset prepare_data(const DataSpec& spec, std::vector<std::string>* warnings = nullptr);

// --- artifacts ---------------------------------------------------------------

void write_report_csv(const std::string& path, const TrainReport& report);
std::vector<EpochRow> parse_report_csv(const std::string& path);

struct PortionSummaryRow {
  double sweep_value = 0.0;
  double avg_p = 0.0;
};

// Mean portion value over steps, cells and sequences of each report's
// converged validation pass; one row per sweep point.
std::vector<PortionSummaryRow> portion_summary(
    const std::vector<std::pair<double, const TrainReport*>>& reports);

void write_portion_summary_csv(const std::string& path,
                               const std::vector<PortionSummaryRow>& rows);

struct ComparisonRow {
  std::string method;
  double ce_epoch1 = 0.0;
  double final_ce = 0.0;
  int epochs_to_convergence = 0;
  int64_t total_eff_mults = 0;
  std::string status = "ok";  // or "not implemented (external baseline)"
};

// Table-3-shaped comparison: trained methods plus the absent-by-design
// Phased LSTM / Clockwork RNN rows.
std::vector<ComparisonRow> comparison_rows(
    const std::vector<std::pair<std::string, const TrainReport*>>& trained);

void write_comparison_csv(const std::string& path, const std::vector<ComparisonRow>& rows);

// --- config ------------------------------------------------------------------

// JSON -> spec with defaults; unknown keys rejected.
ExperimentSpec spec_from_json_file(const std::string& path,
                                   const std::vector<std::string>& overrides);
std::string spec_to_json(const ExperimentSpec& spec);

// Runs the experiment end to end: prepares data, trains each point, writes
// per-epoch CSV, summary JSON, portion summary, comparison table, checkpoint
// and the resolved config; returns a process exit code.
int run_experiment(const ExperimentSpec& spec);

}  // namespace adaseq
