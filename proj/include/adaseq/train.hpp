#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adaseq/arch.hpp"
#include "adaseq/data.hpp"
#include "adaseq/tape.hpp"

namespace adaseq {

// Mean over steps of -log softmax(logits_t)[label_t], computed with
// max-subtraction.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 5;          // epochs without validation improvement before stop
  double min_delta = 1e-4;
  double grad_clip_norm = 5.0;
  uint64_t seed = 0;
  bool record_wall = true;   // off: wall_seconds column is 0 so reports are bitwise reproducible

  void validate() const;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_ce = 0.0;
  double val_ce = 0.0;
  double avg_p = 1.0;  // validation-pass mean portion value; 1.0 for ungated models
  int64_t cum_eff_mults = 0;  // running total over training-forward steps
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> epochs;
  int best_epoch = 0;         // 1-based epoch of the best validation CE
  int convergence_epoch = 0;  // == best_epoch
  double test_ce = 0.0;       // evaluated once at the best-validation checkpoint
  int64_t total_eff_mults = 0;
  double final_avg_p = 1.0;            // converged model, validation pass
  std::vector<double> final_val_p;     // per-step per-cell p values of that pass
};

struct TrainOutcome {
  TrainReport report;
  ModelParams best_params;
};

TrainOutcome train(const ModelConfig& mcfg, const TrainConfig& tcfg, const SequenceDataset& data);

// Pure forward evaluation of one split.
struct EvalResult {
  double ce = 0.0;
  double avg_p = 1.0;
  std::vector<double> p_values;
  int64_t eff_mults = 0;
};

EvalResult evaluate_split(const ModelParams& params, const ModelConfig& cfg,
                          const SequenceDataset& data, int split);

// --- optimizer -------------------------------------------------------------

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<Tensor> m, v;
};

// Bias-corrected adaptive-moment update; global gradient-norm clipping at
// clip_norm (<= 0 disables) is applied first. Throws TrainError on NaN.
void adam_step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads, AdamState& state,
               double clip_norm);

// --- taped forward ---------------------------------------------------------

// Parameter leaves of one model on one tape, in ModelParams::visit order.
struct TapedModel {
  struct Cell {
    int Wf, Uf, bf, Wi, Ui, bi, Wo, Uo, bo, Wc, Uc, bc;
    int Wp = -1, Up = -1, bp = -1;
    bool gated = false;
  };
  ModelConfig cfg;
  int in_W = -1, in_b = -1, out_W = -1, out_b = -1;
  std::vector<Cell> bottom;
  Cell top;
  bool has_top = false;
  std::vector<int> leaf_ids;          // visit order
  std::vector<std::string> leaf_names;

  static TapedModel build(Tape& tape, const ModelConfig& cfg, const ModelParams& params);
};

struct TapedSequenceLoss {
  int loss_node = -1;
  std::vector<StepTrace> traces;
};

// Records the full unrolled forward pass plus the per-step cross-entropy mean
// on the tape; numerically identical to forward_sequence + cross_entropy.
TapedSequenceLoss taped_sequence_loss(Tape& tape, const TapedModel& model, const Tensor& sequence,
                                      const std::vector<int>& labels);

// --- gradient verification --------------------------------------------------

// (f(x+h) - f(x-h)) / 2h with mutate-and-restore on coord.
double central_difference(const std::function<double()>& eval, double& coord, double step);

struct FdParamEntry {
  std::string name;
  double max_rel_err = 0.0;  // over non-flagged coordinates
  int flagged = 0;           // mask branch changed between the +/- probes
  int failed = 0;
  int checked = 0;
};

struct FdReport {
  std::vector<FdParamEntry> params;
  double max_rel_err = 0.0;
  int total_flagged = 0;
  int total_failed = 0;
  int total_checked = 0;
  double step = 0.0;
  double tolerance = 0.0;
  bool pass() const { return total_failed == 0; }
};

// Central differences per parameter coordinate against the taped gradients.
// Coordinates whose soft-mask branch pattern changes between the +/- probes
// are flagged as non-differentiable points, not failures.
FdReport finite_diff_check(const ModelConfig& cfg, ModelParams& params,
                           const std::vector<const Sequence*>& batch, double step,
                           double tolerance);

}  // namespace adaseq
