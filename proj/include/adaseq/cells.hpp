#pragma once

#include "adaseq/tensor.hpp"

namespace adaseq {

// Constants of the soft truncation mask: clip threshold epsilon and the
// sharpness of the sigmoid ramp.
struct MaskConstants {
  double epsilon = 0.01;
  double sharpness = 20.0;
  void validate() const;
};

// Weights of one LSTM cell; the W_* act on the previous hidden state, the
// U_* on the step input, both D x D. Portion-gate parameters (1 x D rows and
// a scalar bias) are present iff has_portion_gate.
struct CellParams {
  Tensor Wf, Uf, bf;
  Tensor Wi, Ui, bi;
  Tensor Wo, Uo, bo;
  Tensor Wc, Uc, bc;
  Tensor Wp, Up, bp;
  bool has_portion_gate = false;

  int dim() const { return Wf.rows; }
  static CellParams init(int D, bool gated, Rng& rng);
  static CellParams zeros(int D, bool gated);
};

// Memory / hidden pair threaded through time.
struct CellState {
  Tensor C;
  Tensor h;
  static CellState zeros(int D) { return {Tensor::zeros(D, 1), Tensor::zeros(D, 1)}; }
};

// Vanilla LSTM update (no peephole connections).
CellState lstm_step(const CellParams& params, const CellState& prev, const Tensor& x);

// Scalar portion gate: sigmoid of an affine map of the full (unmasked)
// previous hidden state and input. Throws ContractError on ungated cells.
double portion_gate(const CellParams& params, const Tensor& prev_h, const Tensor& x);

// Piecewise clip: 0 below epsilon, 1 above 1-epsilon, identity between.
double thres(double x, double epsilon);

// Soft truncation mask e with e_i = thres(sigmoid(sharpness*(p*D - i))) for
// i = 1..D. Non-increasing in i, entries in [0, 1].
Tensor soft_mask(double p, int D, const MaskConstants& mc);

// out_i = e_i * fresh_i + (1 - e_i) * old_i, with the clipped endpoints taken
// as exact copies so full updates and copy-through are bitwise.
Tensor blend(const Tensor& e, const Tensor& fresh, const Tensor& old);

// Partial update with an externally supplied mask: gates computed from the
// masked (h, x), then memory and hidden blended with the same mask.
CellState da_step_with_mask(const CellParams& params, const CellState& prev, const Tensor& x,
                            const Tensor& e);

struct DaStepResult {
  CellState state;
  double p = 0.0;
  Tensor e;
};

// Full depth-adaptive cell update: portion gate, soft mask, masked gates,
// blended state. Returns (p, e) for tracing and cost accounting.
DaStepResult da_step(const CellParams& params, const CellState& prev, const Tensor& x,
                     const MaskConstants& mc);

}  // namespace adaseq
