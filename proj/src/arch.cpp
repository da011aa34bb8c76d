#include "adaseq/arch.hpp"

#include "adaseq/metrics.hpp"

namespace adaseq {

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::da_lstm: return "da_lstm";
    case Arch::stacked_lstm: return "stacked_lstm";
    case Arch::deep_transition_lstm: return "deep_transition_lstm";
  }
  return "unknown";
}

Arch arch_from_name(const std::string& name) {
  if (name == "da_lstm") return Arch::da_lstm;
  if (name == "stacked_lstm") return Arch::stacked_lstm;
  if (name == "deep_transition_lstm") return Arch::deep_transition_lstm;
  throw ConfigError("unknown architecture: " + name);
}

void ModelConfig::validate() const {
  if (hidden < 1) throw ConfigError("hidden size must be >= 1");
  if (cells < 1) throw ConfigError("cell count must be >= 1");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (arch == Arch::da_lstm && cells < 2) {
    // B_1 and B_m are distinct roles; with m = 1 the cell would have to
    // consume the raw input and the top-cell feedback simultaneously.
    throw ConfigError("da_lstm requires at least 2 bottom cells");
  }
  mask.validate();
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams p;
  p.in_W = init_params(cfg.hidden, cfg.input_dim, rng, Init::uniform_scaled);
  p.in_b = Tensor::zeros(cfg.hidden, 1);
  const bool gated = cfg.arch == Arch::da_lstm;
  p.bottom.reserve(cfg.cells);
  for (int i = 0; i < cfg.cells; ++i) p.bottom.push_back(CellParams::init(cfg.hidden, gated, rng));
  if (cfg.arch == Arch::da_lstm) p.top = CellParams::init(cfg.hidden, true, rng);
  p.out_W = init_params(cfg.num_classes, cfg.hidden, rng, Init::uniform_scaled);
  p.out_b = Tensor::zeros(cfg.num_classes, 1);
  return p;
}

int64_t ModelParams::param_count() const {
  int64_t n = 0;
  visit([&n](const std::string&, const Tensor& t) { n += static_cast<int64_t>(t.size()); });
  return n;
}

namespace {

template <typename Fn>
void visit_cell(const std::string& prefix, CellParams& c, const Fn& fn) {
  fn(prefix + ".Wf", c.Wf);
  fn(prefix + ".Uf", c.Uf);
  fn(prefix + ".bf", c.bf);
  fn(prefix + ".Wi", c.Wi);
  fn(prefix + ".Ui", c.Ui);
  fn(prefix + ".bi", c.bi);
  fn(prefix + ".Wo", c.Wo);
  fn(prefix + ".Uo", c.Uo);
  fn(prefix + ".bo", c.bo);
  fn(prefix + ".Wc", c.Wc);
  fn(prefix + ".Uc", c.Uc);
  fn(prefix + ".bc", c.bc);
  if (c.has_portion_gate) {
    fn(prefix + ".Wp", c.Wp);
    fn(prefix + ".Up", c.Up);
    fn(prefix + ".bp", c.bp);
  }
}

}  // namespace

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("in.W", in_W);
  fn("in.b", in_b);
  for (size_t i = 0; i < bottom.size(); ++i) {
    visit_cell("bottom" + std::to_string(i), bottom[i], fn);
  }
  if (top) visit_cell("top", *top, fn);
  fn("out.W", out_W);
  fn("out.b", out_b);
}

void ModelParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->visit(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

int64_t StepTrace::total_mults() const {
  int64_t n = 0;
  for (const auto& c : cells) n += c.eff_mults;
  return n;
}

namespace {

Tensor project_input(const ModelParams& p, const Tensor& x_raw) {
  return add(matmul(p.in_W, x_raw), p.in_b);
}

Tensor project_output(const ModelParams& p, const Tensor& h) {
  return add(matmul(p.out_W, h), p.out_b);
}

CellTrace gated_trace(const DaStepResult& r, int D) {
  return {true, r.p, r.e, gated_cell_mults(r.p, D)};
}

CellTrace ungated_trace(int D) { return {false, 0.0, Tensor(), ungated_cell_mults(D)}; }

// Runs one gated cell, honoring a forced mask when present.
DaStepResult run_da_cell(const CellParams& cell, const CellState& prev, const Tensor& x,
                         const MaskConstants& mc, const Tensor* force_mask) {
  if (force_mask != nullptr) {
    DaStepResult r;
    r.p = portion_gate(cell, prev.h, x);
    r.e = *force_mask;
    r.state = da_step_with_mask(cell, prev, x, r.e);
    return r;
  }
  return da_step(cell, prev, x, mc);
}

}  // namespace

DaStepOut da_lstm_step(const ModelParams& params, const ModelConfig& cfg,
                       const CellState& prev_bottom, const CellState& prev_top,
                       const Tensor& x_raw, const Tensor* force_mask) {
  const int D = cfg.hidden;
  const int m = static_cast<int>(params.bottom.size());
  DaStepOut out;
  Tensor x = project_input(params, x_raw);

  DaStepResult b1 = run_da_cell(params.bottom[0], prev_bottom, x, cfg.mask, force_mask);
  out.trace.cells.push_back(gated_trace(b1, D));

  DaStepResult t = run_da_cell(*params.top, prev_top, b1.state.h, cfg.mask, force_mask);
  out.trace.cells.push_back(gated_trace(t, D));
  out.top = t.state;

  CellState chain = b1.state;
  Tensor zero_x = Tensor::zeros(D, 1);
  for (int i = 1; i + 1 < m; ++i) {
    DaStepResult bi = run_da_cell(params.bottom[i], chain, zero_x, cfg.mask, force_mask);
    out.trace.cells.push_back(gated_trace(bi, D));
    chain = bi.state;
  }

  DaStepResult bm = run_da_cell(params.bottom[m - 1], chain, t.state.h, cfg.mask, force_mask);
  out.trace.cells.push_back(gated_trace(bm, D));
  out.bottom = bm.state;

  out.logits = project_output(params, out.bottom.h);
  return out;
}

StackedStepOut stacked_step(const ModelParams& params, const std::vector<CellState>& prev_states,
                            const Tensor& x_raw) {
  const int D = params.bottom.front().dim();
  if (prev_states.size() != params.bottom.size()) {
    throw DimensionError("stacked_step", std::to_string(prev_states.size()) + " states",
                         std::to_string(params.bottom.size()) + " layers");
  }
  StackedStepOut out;
  out.states.reserve(params.bottom.size());
  Tensor layer_in = project_input(params, x_raw);
  for (size_t k = 0; k < params.bottom.size(); ++k) {
    CellState s = lstm_step(params.bottom[k], prev_states[k], layer_in);
    out.trace.cells.push_back(ungated_trace(D));
    layer_in = s.h;
    out.states.push_back(std::move(s));
  }
  out.logits = project_output(params, out.states.back().h);
  return out;
}

DeepTransitionStepOut deep_transition_step(const ModelParams& params, const CellState& prev,
                                           const Tensor& x_raw) {
  const int D = params.bottom.front().dim();
  DeepTransitionStepOut out;
  Tensor x = project_input(params, x_raw);
  CellState chain = lstm_step(params.bottom[0], prev, x);
  out.trace.cells.push_back(ungated_trace(D));
  Tensor zero_x = Tensor::zeros(D, 1);
  for (size_t i = 1; i < params.bottom.size(); ++i) {
    chain = lstm_step(params.bottom[i], chain, zero_x);
    out.trace.cells.push_back(ungated_trace(D));
  }
  out.state = chain;
  out.logits = project_output(params, chain.h);
  return out;
}

ForwardResult forward_sequence(const ModelParams& params, const ModelConfig& cfg,
                               const Tensor& sequence, const Tensor* force_mask) {
  if (sequence.rows < 1) throw DataError("forward_sequence: empty sequence");
  if (sequence.cols != cfg.input_dim) {
    throw DimensionError("forward_sequence", sequence.shape_str(),
                         "n x " + std::to_string(cfg.input_dim));
  }
  const int n = sequence.rows;
  ForwardResult out;
  out.logits = Tensor(n, cfg.num_classes);
  out.traces.reserve(n);

  Tensor x_raw(cfg.input_dim, 1);
  auto load_step = [&](int t) {
    for (int j = 0; j < cfg.input_dim; ++j) x_raw.data[j] = sequence(t, j);
  };
  auto emit = [&](int t, const Tensor& logits, StepTrace trace) {
    for (int k = 0; k < cfg.num_classes; ++k) out.logits(t, k) = logits.data[k];
    out.traces.push_back(std::move(trace));
  };

  switch (cfg.arch) {
    case Arch::da_lstm: {
      CellState bottom = CellState::zeros(cfg.hidden);
      CellState top = CellState::zeros(cfg.hidden);
      for (int t = 0; t < n; ++t) {
        load_step(t);
        DaStepOut s = da_lstm_step(params, cfg, bottom, top, x_raw, force_mask);
        bottom = s.bottom;
        top = s.top;
        emit(t, s.logits, std::move(s.trace));
      }
      break;
    }
    case Arch::stacked_lstm: {
      std::vector<CellState> states(params.bottom.size(), CellState::zeros(cfg.hidden));
      for (int t = 0; t < n; ++t) {
        load_step(t);
        StackedStepOut s = stacked_step(params, states, x_raw);
        states = s.states;
        emit(t, s.logits, std::move(s.trace));
      }
      break;
    }
    case Arch::deep_transition_lstm: {
      CellState state = CellState::zeros(cfg.hidden);
      for (int t = 0; t < n; ++t) {
        load_step(t);
        DeepTransitionStepOut s = deep_transition_step(params, state, x_raw);
        state = s.state;
        emit(t, s.logits, std::move(s.trace));
      }
      break;
    }
  }
  return out;
}

}  // namespace adaseq
