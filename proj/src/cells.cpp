#include "adaseq/cells.hpp"

#include <cmath>

namespace adaseq {

void MaskConstants::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw ConfigError("mask epsilon must lie in (0, 0.5), got " + std::to_string(epsilon));
  }
  if (!(sharpness > 0.0)) {
    throw ConfigError("mask sharpness must be positive, got " + std::to_string(sharpness));
  }
}

CellParams CellParams::init(int D, bool gated, Rng& rng) {
  CellParams p;
  p.Wf = init_params(D, D, rng, Init::uniform_scaled);
  p.Uf = init_params(D, D, rng, Init::uniform_scaled);
  p.bf = Tensor::zeros(D, 1);
  p.Wi = init_params(D, D, rng, Init::uniform_scaled);
  p.Ui = init_params(D, D, rng, Init::uniform_scaled);
  p.bi = Tensor::zeros(D, 1);
  p.Wo = init_params(D, D, rng, Init::uniform_scaled);
  p.Uo = init_params(D, D, rng, Init::uniform_scaled);
  p.bo = Tensor::zeros(D, 1);
  p.Wc = init_params(D, D, rng, Init::uniform_scaled);
  p.Uc = init_params(D, D, rng, Init::uniform_scaled);
  p.bc = Tensor::zeros(D, 1);
  if (gated) {
    p.Wp = init_params(1, D, rng, Init::uniform_scaled);
    p.Up = init_params(1, D, rng, Init::uniform_scaled);
    p.bp = Tensor::zeros(1, 1);
    p.has_portion_gate = true;
  }
  return p;
}

CellParams CellParams::zeros(int D, bool gated) {
  CellParams p;
  p.Wf = Tensor::zeros(D, D);
  p.Uf = Tensor::zeros(D, D);
  p.bf = Tensor::zeros(D, 1);
  p.Wi = Tensor::zeros(D, D);
  p.Ui = Tensor::zeros(D, D);
  p.bi = Tensor::zeros(D, 1);
  p.Wo = Tensor::zeros(D, D);
  p.Uo = Tensor::zeros(D, D);
  p.bo = Tensor::zeros(D, 1);
  p.Wc = Tensor::zeros(D, D);
  p.Uc = Tensor::zeros(D, D);
  p.bc = Tensor::zeros(D, 1);
  if (gated) {
    p.Wp = Tensor::zeros(1, D);
    p.Up = Tensor::zeros(1, D);
    p.bp = Tensor::zeros(1, 1);
    p.has_portion_gate = true;
  }
  return p;
}

namespace {

void check_step_dims(const CellParams& params, const CellState& prev, const Tensor& x,
                     const char* op) {
  const int D = params.dim();
  if (prev.h.rows != D || prev.h.cols != 1) {
    throw DimensionError(op, prev.h.shape_str(), std::to_string(D) + "x1 hidden");
  }
  if (prev.C.rows != D || prev.C.cols != 1) {
    throw DimensionError(op, prev.C.shape_str(), std::to_string(D) + "x1 memory");
  }
  if (x.rows != D || x.cols != 1) {
    throw DimensionError(op, x.shape_str(), std::to_string(D) + "x1 input");
  }
}

Tensor gate_affine(const Tensor& W, const Tensor& h, const Tensor& U, const Tensor& x,
                   const Tensor& b) {
  return add(add(matmul(W, h), matmul(U, x)), b);
}

// Core gate math shared by the vanilla and masked updates; h and x are
// whatever the caller decided to feed (full or masked).
CellState gate_update(const CellParams& p, const Tensor& h, const Tensor& x, const Tensor& prev_C) {
  Tensor f = sigmoid(gate_affine(p.Wf, h, p.Uf, x, p.bf));
  Tensor i = sigmoid(gate_affine(p.Wi, h, p.Ui, x, p.bi));
  Tensor o = sigmoid(gate_affine(p.Wo, h, p.Uo, x, p.bo));
  Tensor c_hat = tanh(gate_affine(p.Wc, h, p.Uc, x, p.bc));
  Tensor c_new = add(emul(f, prev_C), emul(i, c_hat));
  Tensor h_new = emul(o, tanh(c_new));
  return {c_new, h_new};
}

}  // namespace

CellState lstm_step(const CellParams& params, const CellState& prev, const Tensor& x) {
  check_step_dims(params, prev, x, "lstm_step");
  return gate_update(params, prev.h, x, prev.C);
}

double portion_gate(const CellParams& params, const Tensor& prev_h, const Tensor& x) {
  if (!params.has_portion_gate) {
    throw ContractError("portion_gate: cell has no portion gate");
  }
  const int D = params.dim();
  if (prev_h.rows != D || x.rows != D) {
    throw DimensionError("portion_gate", prev_h.shape_str(), x.shape_str());
  }
  Tensor pre = add(add(matmul(params.Wp, prev_h), matmul(params.Up, x)), params.bp);
  return sigmoid(pre.data[0]);
}

double thres(double x, double epsilon) {
  if (x < epsilon) return 0.0;
  if (x > 1.0 - epsilon) return 1.0;
  return x;
}

Tensor soft_mask(double p, int D, const MaskConstants& mc) {
  Tensor e(D, 1);
  for (int j = 0; j < D; ++j) {
    const double i = static_cast<double>(j + 1);
    e.data[j] = thres(sigmoid(mc.sharpness * (p * D - i)), mc.epsilon);
  }
  return e;
}

Tensor blend(const Tensor& e, const Tensor& fresh, const Tensor& old) {
  if (!e.same_shape(fresh)) throw DimensionError("blend", e.shape_str(), fresh.shape_str());
  if (!e.same_shape(old)) throw DimensionError("blend", e.shape_str(), old.shape_str());
  Tensor out(e.rows, e.cols);
  for (size_t i = 0; i < e.size(); ++i) {
    const double w = e.data[i];
    if (w == 1.0) {
      out.data[i] = fresh.data[i];
    } else if (w == 0.0) {
      out.data[i] = old.data[i];
    } else {
      out.data[i] = w * fresh.data[i] + (1.0 - w) * old.data[i];
    }
  }
  return out;
}

CellState da_step_with_mask(const CellParams& params, const CellState& prev, const Tensor& x,
                            const Tensor& e) {
  check_step_dims(params, prev, x, "da_step");
  if (e.rows != params.dim() || e.cols != 1) {
    throw DimensionError("da_step", e.shape_str(), std::to_string(params.dim()) + "x1 mask");
  }
  Tensor h_star = emul(prev.h, e);
  Tensor x_star = emul(x, e);
  CellState updated = gate_update(params, h_star, x_star, prev.C);
  CellState out;
  out.C = blend(e, updated.C, prev.C);
  out.h = blend(e, updated.h, prev.h);
  return out;
}

DaStepResult da_step(const CellParams& params, const CellState& prev, const Tensor& x,
                     const MaskConstants& mc) {
  DaStepResult r;
  r.p = portion_gate(params, prev.h, x);
  r.e = soft_mask(r.p, params.dim(), mc);
  r.state = da_step_with_mask(params, prev, x, r.e);
  return r;
}

}  // namespace adaseq
