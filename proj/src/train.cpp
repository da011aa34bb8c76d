#include "adaseq/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "adaseq/metrics.hpp"

namespace adaseq {

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.rows;
  const int k = logits.cols;
  if (n != static_cast<int>(labels.size())) {
    throw DimensionError("cross_entropy", logits.shape_str(),
                         std::to_string(labels.size()) + " labels");
  }
  double sum = 0.0;
  for (int t = 0; t < n; ++t) {
    const int label = labels[t];
    if (label < 0 || label >= k) {
      throw TrainError("cross_entropy: label " + std::to_string(label) + " out of range at step " +
                       std::to_string(t));
    }
    double max_z = logits(t, 0);
    for (int j = 1; j < k; ++j) max_z = std::max(max_z, logits(t, j));
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += std::exp(logits(t, j) - max_z);
    sum += -(logits(t, label) - max_z - std::log(acc));
  }
  return sum * (1.0 / static_cast<double>(n));
}

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
}

// --- taped forward ---------------------------------------------------------

TapedModel TapedModel::build(Tape& tape, const ModelConfig& cfg, const ModelParams& params) {
  TapedModel tm;
  tm.cfg = cfg;
  std::map<std::string, int> ids;
  params.visit([&](const std::string& name, const Tensor& t) {
    int id = tape.leaf(t);
    tm.leaf_ids.push_back(id);
    tm.leaf_names.push_back(name);
    ids[name] = id;
  });
  auto cell_ids = [&ids](const std::string& prefix, bool gated) {
    Cell c;
    c.Wf = ids.at(prefix + ".Wf");
    c.Uf = ids.at(prefix + ".Uf");
    c.bf = ids.at(prefix + ".bf");
    c.Wi = ids.at(prefix + ".Wi");
    c.Ui = ids.at(prefix + ".Ui");
    c.bi = ids.at(prefix + ".bi");
    c.Wo = ids.at(prefix + ".Wo");
    c.Uo = ids.at(prefix + ".Uo");
    c.bo = ids.at(prefix + ".bo");
    c.Wc = ids.at(prefix + ".Wc");
    c.Uc = ids.at(prefix + ".Uc");
    c.bc = ids.at(prefix + ".bc");
    if (gated) {
      c.Wp = ids.at(prefix + ".Wp");
      c.Up = ids.at(prefix + ".Up");
      c.bp = ids.at(prefix + ".bp");
      c.gated = true;
    }
    return c;
  };
  tm.in_W = ids.at("in.W");
  tm.in_b = ids.at("in.b");
  tm.out_W = ids.at("out.W");
  tm.out_b = ids.at("out.b");
  const bool gated = cfg.arch == Arch::da_lstm;
  for (size_t i = 0; i < params.bottom.size(); ++i) {
    tm.bottom.push_back(cell_ids("bottom" + std::to_string(i), gated));
  }
  if (params.top) {
    tm.top = cell_ids("top", true);
    tm.has_top = true;
  }
  return tm;
}

namespace {

struct TapedState {
  int C = -1;
  int h = -1;
};

int taped_gate_affine(Tape& t, int W, int h, int U, int x, int b) {
  return t.add(t.add(t.matmul(W, h), t.matmul(U, x)), b);
}

TapedState taped_gate_update(Tape& t, const TapedModel::Cell& c, int h, int x, int prev_C) {
  int f = t.sigmoid(taped_gate_affine(t, c.Wf, h, c.Uf, x, c.bf));
  int i = t.sigmoid(taped_gate_affine(t, c.Wi, h, c.Ui, x, c.bi));
  int o = t.sigmoid(taped_gate_affine(t, c.Wo, h, c.Uo, x, c.bo));
  int c_hat = t.tanh(taped_gate_affine(t, c.Wc, h, c.Uc, x, c.bc));
  int c_new = t.add(t.emul(f, prev_C), t.emul(i, c_hat));
  int h_new = t.emul(o, t.tanh(c_new));
  return {c_new, h_new};
}

TapedState taped_lstm_step(Tape& t, const TapedModel::Cell& c, const TapedState& prev, int x) {
  return taped_gate_update(t, c, prev.h, x, prev.C);
}

struct TapedDaStep {
  TapedState state;
  int p = -1;
  int e = -1;
};

TapedDaStep taped_da_step(Tape& t, const TapedModel::Cell& c, const TapedState& prev, int x,
                          const MaskConstants& mc, int D) {
  TapedDaStep out;
  out.p = t.sigmoid(taped_gate_affine(t, c.Wp, prev.h, c.Up, x, c.bp));
  out.e = t.soft_mask(out.p, D, mc);
  int h_star = t.emul(prev.h, out.e);
  int x_star = t.emul(x, out.e);
  TapedState updated = taped_gate_update(t, c, h_star, x_star, prev.C);
  out.state.C = t.blend(out.e, updated.C, prev.C);
  out.state.h = t.blend(out.e, updated.h, prev.h);
  return out;
}

CellTrace taped_gated_trace(const Tape& t, const TapedDaStep& s, int D) {
  CellTrace tr;
  tr.gated = true;
  tr.p = t.value(s.p).data[0];
  tr.e = t.value(s.e);
  tr.eff_mults = gated_cell_mults(tr.p, D);
  return tr;
}

}  // namespace

TapedSequenceLoss taped_sequence_loss(Tape& tape, const TapedModel& model, const Tensor& sequence,
                                      const std::vector<int>& labels) {
  const ModelConfig& cfg = model.cfg;
  if (sequence.rows < 1) throw DataError("taped_sequence_loss: empty sequence");
  if (sequence.cols != cfg.input_dim) {
    throw DimensionError("taped_sequence_loss", sequence.shape_str(),
                         "n x " + std::to_string(cfg.input_dim));
  }
  const int n = sequence.rows;
  const int D = cfg.hidden;
  const int m = static_cast<int>(model.bottom.size());

  TapedSequenceLoss out;
  out.traces.reserve(n);

  int zero_state = tape.constant(Tensor::zeros(D, 1));
  int zero_x = tape.constant(Tensor::zeros(D, 1));

  auto step_input = [&](int t) {
    Tensor x(cfg.input_dim, 1);
    for (int j = 0; j < cfg.input_dim; ++j) x.data[j] = sequence(t, j);
    return tape.constant(std::move(x));
  };
  auto project_in = [&](int x_raw) { return tape.add(tape.matmul(model.in_W, x_raw), model.in_b); };
  auto project_out = [&](int h) { return tape.add(tape.matmul(model.out_W, h), model.out_b); };

  int ce_acc = -1;
  auto add_step_loss = [&](int logits, int t) {
    int ce = tape.softmax_ce(logits, labels[t]);
    ce_acc = (ce_acc < 0) ? ce : tape.add(ce_acc, ce);
  };

  switch (cfg.arch) {
    case Arch::da_lstm: {
      TapedState bottom{zero_state, zero_state};
      TapedState top{zero_state, zero_state};
      for (int t = 0; t < n; ++t) {
        StepTrace trace;
        int x = project_in(step_input(t));
        TapedDaStep b1 = taped_da_step(tape, model.bottom[0], bottom, x, cfg.mask, D);
        trace.cells.push_back(taped_gated_trace(tape, b1, D));
        TapedDaStep tc = taped_da_step(tape, model.top, top, b1.state.h, cfg.mask, D);
        trace.cells.push_back(taped_gated_trace(tape, tc, D));
        top = tc.state;
        TapedState chain = b1.state;
        for (int i = 1; i + 1 < m; ++i) {
          TapedDaStep bi = taped_da_step(tape, model.bottom[i], chain, zero_x, cfg.mask, D);
          trace.cells.push_back(taped_gated_trace(tape, bi, D));
          chain = bi.state;
        }
        TapedDaStep bm = taped_da_step(tape, model.bottom[m - 1], chain, tc.state.h, cfg.mask, D);
        trace.cells.push_back(taped_gated_trace(tape, bm, D));
        bottom = bm.state;
        add_step_loss(project_out(bottom.h), t);
        out.traces.push_back(std::move(trace));
      }
      break;
    }
    case Arch::stacked_lstm: {
      std::vector<TapedState> states(m, TapedState{zero_state, zero_state});
      for (int t = 0; t < n; ++t) {
        StepTrace trace;
        int layer_in = project_in(step_input(t));
        for (int k = 0; k < m; ++k) {
          states[k] = taped_lstm_step(tape, model.bottom[k], states[k], layer_in);
          trace.cells.push_back({false, 0.0, Tensor(), ungated_cell_mults(D)});
          layer_in = states[k].h;
        }
        add_step_loss(project_out(states.back().h), t);
        out.traces.push_back(std::move(trace));
      }
      break;
    }
    case Arch::deep_transition_lstm: {
      TapedState state{zero_state, zero_state};
      for (int t = 0; t < n; ++t) {
        StepTrace trace;
        int x = project_in(step_input(t));
        TapedState chain = taped_lstm_step(tape, model.bottom[0], state, x);
        trace.cells.push_back({false, 0.0, Tensor(), ungated_cell_mults(D)});
        for (int i = 1; i < m; ++i) {
          chain = taped_lstm_step(tape, model.bottom[i], chain, zero_x);
          trace.cells.push_back({false, 0.0, Tensor(), ungated_cell_mults(D)});
        }
        state = chain;
        add_step_loss(project_out(state.h), t);
        out.traces.push_back(std::move(trace));
      }
      break;
    }
  }
  out.loss_node = tape.scale(ce_acc, 1.0 / static_cast<double>(n));
  return out;
}

// --- optimizer ---------------------------------------------------------------

void adam_step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads, AdamState& state,
               double clip_norm) {
  if (params.size() != grads.size()) {
    throw TrainError("adam_step: parameter/gradient count mismatch");
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
  }
  double sq_norm = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data) {
      if (std::isnan(v)) throw TrainError("adam_step: NaN gradient");
      sq_norm += v * v;
    }
  }
  const double norm = std::sqrt(sq_norm);
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data) v *= factor;
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
      v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
      const double m_hat = m.data[j] / bc1;
      const double v_hat = v.data[j] / bc2;
      p.data[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// --- evaluation ---------------------------------------------------------------

EvalResult evaluate_split(const ModelParams& params, const ModelConfig& cfg,
                          const SequenceDataset& data, int split) {
  std::vector<size_t> idx = data.split_indices(split);
  if (idx.empty()) throw TrainError("evaluate_split: empty split");
  EvalResult out;
  double ce_sum = 0.0;
  double p_sum = 0.0;
  for (size_t i : idx) {
    const Sequence& seq = data.sequences[i];
    ForwardResult fwd = forward_sequence(params, cfg, seq.inputs);
    ce_sum += cross_entropy(fwd.logits, seq.labels);
    for (const StepTrace& st : fwd.traces) {
      out.eff_mults += st.total_mults();
      for (const CellTrace& ct : st.cells) {
        if (ct.gated) {
          out.p_values.push_back(ct.p);
          p_sum += ct.p;
        }
      }
    }
  }
  out.ce = ce_sum / static_cast<double>(idx.size());
  out.avg_p = out.p_values.empty() ? 1.0 : p_sum / static_cast<double>(out.p_values.size());
  return out;
}

// --- training loop -------------------------------------------------------------

TrainOutcome train(const ModelConfig& mcfg, const TrainConfig& tcfg, const SequenceDataset& data) {
  mcfg.validate();
  tcfg.validate();
  if (data.meta.feature_dim != mcfg.input_dim) {
    throw ConfigError("model input_dim " + std::to_string(mcfg.input_dim) +
                      " does not match dataset feature_dim " +
                      std::to_string(data.meta.feature_dim));
  }
  if (data.num_classes() != mcfg.num_classes) {
    throw ConfigError("model num_classes " + std::to_string(mcfg.num_classes) +
                      " does not match dataset classes " + std::to_string(data.num_classes()));
  }
  std::vector<size_t> train_idx = data.split_indices(kTrain);
  if (train_idx.empty()) throw TrainError("train: empty training split");
  if (data.split_indices(kValidation).empty()) throw TrainError("train: empty validation split");
  if (data.split_indices(kTest).empty()) throw TrainError("train: empty test split");

  ModelParams params = ModelParams::init(mcfg);
  std::vector<Tensor*> param_ptrs;
  params.visit([&param_ptrs](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });

  AdamState opt;
  opt.learning_rate = tcfg.learning_rate;
  Rng shuffle_rng(tcfg.seed);

  TrainOutcome outcome;
  outcome.best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  int64_t cum_mults = 0;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(train_idx);

    double ce_sum = 0.0;
    for (size_t batch_start = 0; batch_start < train_idx.size();
         batch_start += static_cast<size_t>(tcfg.batch_size)) {
      const size_t batch_end =
          std::min(batch_start + static_cast<size_t>(tcfg.batch_size), train_idx.size());
      const double batch_n = static_cast<double>(batch_end - batch_start);

      std::vector<Tensor> grads;
      grads.reserve(param_ptrs.size());
      for (Tensor* p : param_ptrs) grads.emplace_back(p->rows, p->cols);

      for (size_t bi = batch_start; bi < batch_end; ++bi) {
        const Sequence& seq = data.sequences[train_idx[bi]];
        Tape tape;
        TapedModel tm = TapedModel::build(tape, mcfg, params);
        TapedSequenceLoss loss = taped_sequence_loss(tape, tm, seq.inputs, seq.labels);
        ce_sum += tape.value(loss.loss_node).data[0];
        for (const StepTrace& st : loss.traces) cum_mults += st.total_mults();
        tape.backward(loss.loss_node, 1.0 / batch_n);
        for (size_t k = 0; k < param_ptrs.size(); ++k) {
          const Tensor& g = tape.grad(tm.leaf_ids[k]);
          for (size_t j = 0; j < g.size(); ++j) grads[k].data[j] += g.data[j];
        }
      }
      for (const Tensor& g : grads) {
        for (double v : g.data) {
          if (std::isnan(v)) {
            throw TrainError("train: NaN gradient in epoch " + std::to_string(epoch) +
                             ", aborting");
          }
        }
      }
      adam_step(param_ptrs, grads, opt, tcfg.grad_clip_norm);
    }

    EvalResult val = evaluate_split(params, mcfg, data, kValidation);
    if (best_val - val.ce > tcfg.min_delta) {
      best_val = val.ce;
      outcome.best_params = params;
      outcome.report.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_ce = ce_sum / static_cast<double>(train_idx.size());
    row.val_ce = val.ce;
    row.avg_p = val.avg_p;
    row.cum_eff_mults = cum_mults;
    if (tcfg.record_wall) {
      row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    outcome.report.epochs.push_back(row);

    if (epochs_since_best >= tcfg.patience) break;
  }

  outcome.report.convergence_epoch = outcome.report.best_epoch;
  outcome.report.total_eff_mults = cum_mults;
  EvalResult converged = evaluate_split(outcome.best_params, mcfg, data, kValidation);
  outcome.report.final_avg_p = converged.avg_p;
  outcome.report.final_val_p = std::move(converged.p_values);
  outcome.report.test_ce = evaluate_split(outcome.best_params, mcfg, data, kTest).ce;
  return outcome;
}

// --- gradient verification ------------------------------------------------------

double central_difference(const std::function<double()>& eval, double& coord, double step) {
  const double saved = coord;
  coord = saved + step;
  const double plus = eval();
  coord = saved - step;
  const double minus = eval();
  coord = saved;
  return (plus - minus) / (2.0 * step);
}

// ---- extended-precision loss oracle -----------------------------------------
// The finite-difference probe divides O(eps * |loss|) evaluation noise by the
// tiny step, which at double precision swamps coordinates whose gradient is
// near the 1e-8 guard. The oracle therefore evaluates the loss with scalar
// long-double loops, independent of the tensor kernels and the tape.

namespace fd_oracle {

using ld = long double;
using Vec = std::vector<ld>;

ld sig(ld x) {
  if (x >= 0.0L) return 1.0L / (1.0L + std::exp(-x));
  ld e = std::exp(x);
  return e / (1.0L + e);
}

struct State {
  Vec C, h;
};

Vec affine(const Tensor& W, const Vec& h, const Tensor& U, const Vec& x, const Tensor& b) {
  Vec z(W.rows);
  for (int j = 0; j < W.rows; ++j) {
    ld acc = b.data[j];
    for (int k = 0; k < W.cols; ++k) acc += static_cast<ld>(W(j, k)) * h[k];
    for (int k = 0; k < U.cols; ++k) acc += static_cast<ld>(U(j, k)) * x[k];
    z[j] = acc;
  }
  return z;
}

State lstm_cell(const CellParams& c, const State& prev, const Vec& x) {
  const int D = c.dim();
  Vec zf = affine(c.Wf, prev.h, c.Uf, x, c.bf);
  Vec zi = affine(c.Wi, prev.h, c.Ui, x, c.bi);
  Vec zo = affine(c.Wo, prev.h, c.Uo, x, c.bo);
  Vec zc = affine(c.Wc, prev.h, c.Uc, x, c.bc);
  State out{Vec(D), Vec(D)};
  for (int j = 0; j < D; ++j) {
    out.C[j] = sig(zf[j]) * prev.C[j] + sig(zi[j]) * std::tanh(zc[j]);
    out.h[j] = sig(zo[j]) * std::tanh(out.C[j]);
  }
  return out;
}

// branch codes per mask entry (0 clipped low, 1 middle, 2 clipped high) are
// appended to sig when present
State da_cell(const CellParams& c, const MaskConstants& mc, const State& prev, const Vec& x,
              std::vector<int8_t>* sig_out) {
  const int D = c.dim();
  ld zp = c.bp.data[0];
  for (int k = 0; k < D; ++k) {
    zp += static_cast<ld>(c.Wp(0, k)) * prev.h[k] + static_cast<ld>(c.Up(0, k)) * x[k];
  }
  const ld p = sig(zp);
  Vec e(D);
  for (int j = 0; j < D; ++j) {
    ld s = sig(static_cast<ld>(mc.sharpness) * (p * D - (j + 1)));
    int8_t branch = 1;
    if (s < static_cast<ld>(mc.epsilon)) {
      e[j] = 0.0L;
      branch = 0;
    } else if (s > 1.0L - static_cast<ld>(mc.epsilon)) {
      e[j] = 1.0L;
      branch = 2;
    } else {
      e[j] = s;
    }
    if (sig_out) sig_out->push_back(branch);
  }
  Vec h_star(D), x_star(D);
  for (int j = 0; j < D; ++j) {
    h_star[j] = prev.h[j] * e[j];
    x_star[j] = x[j] * e[j];
  }
  Vec zf = affine(c.Wf, h_star, c.Uf, x_star, c.bf);
  Vec zi = affine(c.Wi, h_star, c.Ui, x_star, c.bi);
  Vec zo = affine(c.Wo, h_star, c.Uo, x_star, c.bo);
  Vec zc = affine(c.Wc, h_star, c.Uc, x_star, c.bc);
  State out{Vec(D), Vec(D)};
  for (int j = 0; j < D; ++j) {
    ld c_new = sig(zf[j]) * prev.C[j] + sig(zi[j]) * std::tanh(zc[j]);
    ld h_new = sig(zo[j]) * std::tanh(c_new);
    out.C[j] = e[j] * c_new + (1.0L - e[j]) * prev.C[j];
    out.h[j] = e[j] * h_new + (1.0L - e[j]) * prev.h[j];
  }
  return out;
}

Vec project_in(const ModelParams& mp, const Vec& x_raw) {
  Vec x(mp.in_W.rows);
  for (int j = 0; j < mp.in_W.rows; ++j) {
    ld acc = mp.in_b.data[j];
    for (int k = 0; k < mp.in_W.cols; ++k) acc += static_cast<ld>(mp.in_W(j, k)) * x_raw[k];
    x[j] = acc;
  }
  return x;
}

ld sequence_loss(const ModelConfig& cfg, const ModelParams& mp, const Sequence& seq,
                 std::vector<int8_t>* sig) {
  const int D = cfg.hidden;
  const int m = cfg.cells;
  const int n = seq.inputs.rows;
  const Vec zero(D, 0.0L);
  State bottom{zero, zero}, top{zero, zero};
  std::vector<State> stack(m, State{zero, zero});
  ld ce_sum = 0.0L;
  for (int t = 0; t < n; ++t) {
    Vec x_raw(cfg.input_dim);
    for (int j = 0; j < cfg.input_dim; ++j) x_raw[j] = seq.inputs(t, j);
    Vec x = project_in(mp, x_raw);
    const Vec* out_h = nullptr;
    switch (cfg.arch) {
      case Arch::da_lstm: {
        State b1 = da_cell(mp.bottom[0], cfg.mask, bottom, x, sig);
        State tc = da_cell(*mp.top, cfg.mask, top, b1.h, sig);
        top = tc;
        State chain = b1;
        for (int i = 1; i + 1 < m; ++i) chain = da_cell(mp.bottom[i], cfg.mask, chain, zero, sig);
        bottom = da_cell(mp.bottom[m - 1], cfg.mask, chain, tc.h, sig);
        out_h = &bottom.h;
        break;
      }
      case Arch::stacked_lstm: {
        Vec layer_in = x;
        for (int k = 0; k < m; ++k) {
          stack[k] = lstm_cell(mp.bottom[k], stack[k], layer_in);
          layer_in = stack[k].h;
        }
        out_h = &stack.back().h;
        break;
      }
      case Arch::deep_transition_lstm: {
        State chain = lstm_cell(mp.bottom[0], bottom, x);
        for (int i = 1; i < m; ++i) chain = lstm_cell(mp.bottom[i], chain, zero);
        bottom = chain;
        out_h = &bottom.h;
        break;
      }
    }
    Vec logits(cfg.num_classes);
    for (int k = 0; k < cfg.num_classes; ++k) {
      ld acc = mp.out_b.data[k];
      for (int j = 0; j < D; ++j) acc += static_cast<ld>(mp.out_W(k, j)) * (*out_h)[j];
      logits[k] = acc;
    }
    ld max_z = logits[0];
    for (ld v : logits) max_z = std::max(max_z, v);
    ld denom = 0.0L;
    for (ld v : logits) denom += std::exp(v - max_z);
    ce_sum += -(logits[seq.labels[t]] - max_z - std::log(denom));
  }
  return ce_sum / static_cast<ld>(n);
}

ld batch_loss(const ModelConfig& cfg, const ModelParams& mp,
              const std::vector<const Sequence*>& batch, std::vector<int8_t>* sig) {
  ld sum = 0.0L;
  for (const Sequence* seq : batch) sum += sequence_loss(cfg, mp, *seq, sig);
  return sum / static_cast<ld>(batch.size());
}

}  // namespace fd_oracle

FdReport finite_diff_check(const ModelConfig& cfg, ModelParams& params,
                           const std::vector<const Sequence*>& batch, double step,
                           double tolerance) {
  if (batch.empty()) throw TrainError("finite_diff_check: empty batch");
  FdReport report;
  report.step = step;
  report.tolerance = tolerance;

  // taped gradients at the unperturbed point
  std::vector<Tensor*> param_ptrs;
  std::vector<std::string> names;
  params.visit([&](const std::string& name, Tensor& t) {
    param_ptrs.push_back(&t);
    names.push_back(name);
  });
  std::vector<Tensor> bp_grads;
  for (Tensor* p : param_ptrs) bp_grads.emplace_back(p->rows, p->cols);
  const double batch_n = static_cast<double>(batch.size());
  for (const Sequence* seq : batch) {
    Tape tape;
    TapedModel tm = TapedModel::build(tape, cfg, params);
    TapedSequenceLoss loss = taped_sequence_loss(tape, tm, seq->inputs, seq->labels);
    tape.backward(loss.loss_node, 1.0 / batch_n);
    for (size_t k = 0; k < param_ptrs.size(); ++k) {
      const Tensor& g = tape.grad(tm.leaf_ids[k]);
      for (size_t j = 0; j < g.size(); ++j) bp_grads[k].data[j] += g.data[j];
    }
  }

  std::vector<int8_t> sig_plus, sig_minus;
  for (size_t k = 0; k < param_ptrs.size(); ++k) {
    FdParamEntry entry;
    entry.name = names[k];
    Tensor& t = *param_ptrs[k];
    for (size_t j = 0; j < t.size(); ++j) {
      const double saved = t.data[j];
      sig_plus.clear();
      sig_minus.clear();
      t.data[j] = saved + step;
      const long double plus = fd_oracle::batch_loss(cfg, params, batch, &sig_plus);
      t.data[j] = saved - step;
      const long double minus = fd_oracle::batch_loss(cfg, params, batch, &sig_minus);
      t.data[j] = saved;
      ++entry.checked;
      if (sig_plus != sig_minus) {
        ++entry.flagged;
        continue;
      }
      const double fd = static_cast<double>((plus - minus) / (2.0L * static_cast<long double>(step)));
      const double bp = bp_grads[k].data[j];
      const double rel = std::abs(fd - bp) / std::max(1e-8, std::abs(fd) + std::abs(bp));
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      if (rel > tolerance) ++entry.failed;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.total_flagged += entry.flagged;
    report.total_failed += entry.failed;
    report.total_checked += entry.checked;
    report.params.push_back(std::move(entry));
  }
  return report;
}

}  // namespace adaseq
