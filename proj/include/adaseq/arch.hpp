#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adaseq/cells.hpp"

namespace adaseq {

enum class Arch { da_lstm, stacked_lstm, deep_transition_lstm };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::da_lstm;
  int hidden = 40;       // D
  int cells = 3;         // m: bottom-chain length (da/deep transition) or layer count (stacked)
  int input_dim = 52;
  int num_classes = 2;
  MaskConstants mask;
  uint64_t seed = 0;

  void validate() const;
};

// All cells untied. The input projection guarantees every cell input has
// dimension D; the output map is a single affine projection to class logits.
struct ModelParams {
  Tensor in_W, in_b;    // D x input_dim, D x 1
  std::vector<CellParams> bottom;
  std::optional<CellParams> top;  // da_lstm only
  Tensor out_W, out_b;  // num_classes x D, num_classes x 1

  static ModelParams init(const ModelConfig& cfg);
  int64_t param_count() const;

  // Deterministic enumeration of every parameter tensor; the order defines
  // the layout of checkpoints, optimizer state and gradient vectors.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

struct CellTrace {
  bool gated = false;
  double p = 0.0;  // meaningful when gated
  Tensor e;        // empty when ungated
  int64_t eff_mults = 0;
};

struct StepTrace {
  std::vector<CellTrace> cells;
  int64_t total_mults() const;
};

struct DaStepOut {
  CellState bottom;  // B_m state, threaded to the next step
  CellState top;
  Tensor logits;
  StepTrace trace;
};

// One time step of the two-layer hierarchy: B_1 consumes the previous step's
// B_m state and the projected input, the top cell consumes h(B_1), interior
// cells chain with zero input, B_m consumes h(T); logits read h(B_m).
// force_mask (tests only) bypasses the computed soft mask in every cell.
DaStepOut da_lstm_step(const ModelParams& params, const ModelConfig& cfg,
                       const CellState& prev_bottom, const CellState& prev_top,
                       const Tensor& x_raw, const Tensor* force_mask = nullptr);

struct StackedStepOut {
  std::vector<CellState> states;
  Tensor logits;
  StepTrace trace;
};

// Plain stack: layer k consumes layer k-1's hidden output at the same time
// step and its own state from the previous step; no downward links.
StackedStepOut stacked_step(const ModelParams& params, const std::vector<CellState>& prev_states,
                            const Tensor& x_raw);

struct DeepTransitionStepOut {
  CellState state;  // cell m's state, threaded to the next step
  Tensor logits;
  StepTrace trace;
};

// Deep transition: cells chained within the step; cell 1 sees the projected
// input, cells 2..m see zero input; cell m's state carries over.
DeepTransitionStepOut deep_transition_step(const ModelParams& params, const CellState& prev,
                                           const Tensor& x_raw);

struct ForwardResult {
  Tensor logits;  // n x num_classes
  std::vector<StepTrace> traces;
};

// Unrolls the configured step function over an n x input_dim sequence from
// zero initial states.
ForwardResult forward_sequence(const ModelParams& params, const ModelConfig& cfg,
                               const Tensor& sequence, const Tensor* force_mask = nullptr);

}  // namespace adaseq
