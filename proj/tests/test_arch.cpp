#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "adaseq/arch.hpp"
#include "adaseq/metrics.hpp"
#include "adaseq/serialize.hpp"

using namespace adaseq;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

using Vec = std::vector<double>;

// ---- straight-line transcription oracle -------------------------------------
// Written directly from the hierarchy's update equations with plain loops and
// no calls into the library's cell or architecture code.

struct OracleState {
  Vec C, h;
};

Vec oracle_affine(const Tensor& W, const Vec& h, const Tensor& U, const Vec& x, const Tensor& b) {
  const int D = W.rows;
  Vec z(D, 0.0);
  for (int j = 0; j < D; ++j) {
    double acc = b.data[j];
    for (int k = 0; k < W.cols; ++k) acc += W(j, k) * h[k];
    for (int k = 0; k < U.cols; ++k) acc += U(j, k) * x[k];
    z[j] = acc;
  }
  return z;
}

struct OracleDaOut {
  OracleState state;
  double p = 0.0;
};

OracleDaOut oracle_da_cell(const CellParams& c, const OracleState& prev, const Vec& x,
                           const MaskConstants& mc) {
  const int D = c.dim();
  double zp = c.bp.data[0];
  for (int k = 0; k < D; ++k) zp += c.Wp(0, k) * prev.h[k] + c.Up(0, k) * x[k];
  const double p = sig(zp);
  Vec e(D);
  for (int j = 0; j < D; ++j) {
    double s = sig(mc.sharpness * (p * D - (j + 1)));
    e[j] = s < mc.epsilon ? 0.0 : (s > 1.0 - mc.epsilon ? 1.0 : s);
  }
  Vec h_star(D), x_star(D);
  for (int j = 0; j < D; ++j) {
    h_star[j] = prev.h[j] * e[j];
    x_star[j] = x[j] * e[j];
  }
  Vec zf = oracle_affine(c.Wf, h_star, c.Uf, x_star, c.bf);
  Vec zi = oracle_affine(c.Wi, h_star, c.Ui, x_star, c.bi);
  Vec zo = oracle_affine(c.Wo, h_star, c.Uo, x_star, c.bo);
  Vec zc = oracle_affine(c.Wc, h_star, c.Uc, x_star, c.bc);
  OracleDaOut out;
  out.p = p;
  out.state.C.resize(D);
  out.state.h.resize(D);
  for (int j = 0; j < D; ++j) {
    double c_new = sig(zf[j]) * prev.C[j] + sig(zi[j]) * std::tanh(zc[j]);
    double h_new = sig(zo[j]) * std::tanh(c_new);
    out.state.C[j] = e[j] * c_new + (1.0 - e[j]) * prev.C[j];
    out.state.h[j] = e[j] * h_new + (1.0 - e[j]) * prev.h[j];
  }
  return out;
}

OracleState oracle_lstm_cell(const CellParams& c, const OracleState& prev, const Vec& x) {
  const int D = c.dim();
  Vec zf = oracle_affine(c.Wf, prev.h, c.Uf, x, c.bf);
  Vec zi = oracle_affine(c.Wi, prev.h, c.Ui, x, c.bi);
  Vec zo = oracle_affine(c.Wo, prev.h, c.Uo, x, c.bo);
  Vec zc = oracle_affine(c.Wc, prev.h, c.Uc, x, c.bc);
  OracleState out;
  out.C.resize(D);
  out.h.resize(D);
  for (int j = 0; j < D; ++j) {
    out.C[j] = sig(zf[j]) * prev.C[j] + sig(zi[j]) * std::tanh(zc[j]);
    out.h[j] = sig(zo[j]) * std::tanh(out.C[j]);
  }
  return out;
}

Vec oracle_project_in(const ModelParams& mp, const Vec& x_raw) {
  Vec x(mp.in_W.rows, 0.0);
  for (int j = 0; j < mp.in_W.rows; ++j) {
    double acc = mp.in_b.data[j];
    for (int k = 0; k < mp.in_W.cols; ++k) acc += mp.in_W(j, k) * x_raw[k];
    x[j] = acc;
  }
  return x;
}

Vec oracle_project_out(const ModelParams& mp, const Vec& h) {
  Vec y(mp.out_W.rows, 0.0);
  for (int j = 0; j < mp.out_W.rows; ++j) {
    double acc = mp.out_b.data[j];
    for (int k = 0; k < mp.out_W.cols; ++k) acc += mp.out_W(j, k) * h[k];
    y[j] = acc;
  }
  return y;
}

struct OracleDaStates {
  OracleState bottom, top;
};

Vec oracle_da_step(const ModelParams& mp, const ModelConfig& cfg, OracleDaStates& st,
                   const Vec& x_raw) {
  const int D = cfg.hidden;
  const int m = cfg.cells;
  Vec x = oracle_project_in(mp, x_raw);
  OracleDaOut b1 = oracle_da_cell(mp.bottom[0], st.bottom, x, cfg.mask);
  OracleDaOut t = oracle_da_cell(*mp.top, st.top, b1.state.h, cfg.mask);
  st.top = t.state;
  OracleState chain = b1.state;
  Vec zero(D, 0.0);
  for (int i = 1; i + 1 < m; ++i) {
    chain = oracle_da_cell(mp.bottom[i], chain, zero, cfg.mask).state;
  }
  OracleDaOut bm = oracle_da_cell(mp.bottom[m - 1], chain, t.state.h, cfg.mask);
  st.bottom = bm.state;
  return oracle_project_out(mp, st.bottom.h);
}

Tensor random_input(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("da_lstm zero network emits zero logits and p = 0.5") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 3;
  cfg.input_dim = 5;
  cfg.num_classes = 3;
  ModelParams mp = ModelParams::init(cfg);
  mp.visit([](const std::string&, Tensor& t) {
    for (auto& v : t.data) v = 0.0;
  });
  DaStepOut out = da_lstm_step(mp, cfg, CellState::zeros(4), CellState::zeros(4),
                               Tensor::zeros(5, 1));
  for (double v : out.logits.data) CHECK(v == 0.0);
  for (const auto& ct : out.trace.cells) CHECK(ct.p == 0.5);
}

TEST_CASE("da_lstm with m = 2 runs exactly three cells") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 3;
  cfg.cells = 2;
  cfg.input_dim = 2;
  cfg.num_classes = 2;
  cfg.seed = 4;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(5);
  DaStepOut out = da_lstm_step(mp, cfg, CellState::zeros(3), CellState::zeros(3),
                               random_input(2, 1, rng));
  CHECK(out.trace.cells.size() == 3);  // B_1, T, B_m
}

TEST_CASE("da_lstm step matches the transcription oracle") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 3;
  cfg.cells = 3;
  cfg.input_dim = 4;
  cfg.num_classes = 2;
  cfg.seed = 7;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(8);

  OracleDaStates ost;
  ost.bottom = {Vec(3, 0.0), Vec(3, 0.0)};
  ost.top = {Vec(3, 0.0), Vec(3, 0.0)};
  CellState bottom = CellState::zeros(3), top = CellState::zeros(3);

  for (int t = 0; t < 5; ++t) {
    Tensor x_raw = random_input(4, 1, rng);
    DaStepOut out = da_lstm_step(mp, cfg, bottom, top, x_raw);
    Vec expect = oracle_da_step(mp, cfg, ost, x_raw.data);
    for (int k = 0; k < 2; ++k) {
      CHECK(out.logits.data[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    }
    for (int j = 0; j < 3; ++j) {
      CHECK(out.bottom.h.data[j] == doctest::Approx(ost.bottom.h[j]).epsilon(1e-12));
      CHECK(out.top.h.data[j] == doctest::Approx(ost.top.h[j]).epsilon(1e-12));
    }
    bottom = out.bottom;
    top = out.top;
  }
}

TEST_CASE("stacked m = 1 is a single lstm_step plus projections") {
  ModelConfig cfg;
  cfg.arch = Arch::stacked_lstm;
  cfg.hidden = 4;
  cfg.cells = 1;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.seed = 17;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(18);
  Tensor x_raw = random_input(3, 1, rng);
  StackedStepOut out = stacked_step(mp, {CellState::zeros(4)}, x_raw);
  Tensor x = add(matmul(mp.in_W, x_raw), mp.in_b);
  CellState expect = lstm_step(mp.bottom[0], CellState::zeros(4), x);
  CHECK(out.states[0].h.data == expect.h.data);
  Tensor logits = add(matmul(mp.out_W, expect.h), mp.out_b);
  CHECK(out.logits.data == logits.data);
}

TEST_CASE("stacked step matches a hand-rolled three-layer oracle") {
  ModelConfig cfg;
  cfg.arch = Arch::stacked_lstm;
  cfg.hidden = 3;
  cfg.cells = 3;
  cfg.input_dim = 4;
  cfg.num_classes = 2;
  cfg.seed = 19;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(20);

  std::vector<OracleState> ost(3, OracleState{Vec(3, 0.0), Vec(3, 0.0)});
  std::vector<CellState> states(3, CellState::zeros(3));
  for (int t = 0; t < 4; ++t) {
    Tensor x_raw = random_input(4, 1, rng);
    StackedStepOut out = stacked_step(mp, states, x_raw);
    Vec layer_in = oracle_project_in(mp, x_raw.data);
    for (int k = 0; k < 3; ++k) {
      ost[k] = oracle_lstm_cell(mp.bottom[k], ost[k], layer_in);
      layer_in = ost[k].h;
    }
    Vec expect = oracle_project_out(mp, ost.back().h);
    for (int k = 0; k < 2; ++k) {
      CHECK(out.logits.data[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    }
    states = out.states;
  }
}

TEST_CASE("stacked zero network emits zero logits") {
  ModelConfig cfg;
  cfg.arch = Arch::stacked_lstm;
  cfg.hidden = 3;
  cfg.cells = 2;
  cfg.input_dim = 2;
  cfg.num_classes = 2;
  ModelParams mp = ModelParams::init(cfg);
  mp.visit([](const std::string&, Tensor& t) {
    for (auto& v : t.data) v = 0.0;
  });
  StackedStepOut out = stacked_step(mp, {CellState::zeros(3), CellState::zeros(3)},
                                    Tensor::zeros(2, 1));
  for (double v : out.logits.data) CHECK(v == 0.0);
}

TEST_CASE("deep transition m = 1 reduces to vanilla LSTM") {
  ModelConfig cfg;
  cfg.arch = Arch::deep_transition_lstm;
  cfg.hidden = 4;
  cfg.cells = 1;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.seed = 23;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(24);
  Tensor x_raw = random_input(3, 1, rng);
  DeepTransitionStepOut out = deep_transition_step(mp, CellState::zeros(4), x_raw);
  Tensor x = add(matmul(mp.in_W, x_raw), mp.in_b);
  CellState expect = lstm_step(mp.bottom[0], CellState::zeros(4), x);
  CHECK(out.state.C.data == expect.C.data);
  CHECK(out.state.h.data == expect.h.data);
}

TEST_CASE("deep transition matches a chained-cell oracle") {
  ModelConfig cfg;
  cfg.arch = Arch::deep_transition_lstm;
  cfg.hidden = 3;
  cfg.cells = 3;
  cfg.input_dim = 4;
  cfg.num_classes = 2;
  cfg.seed = 27;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(28);
  OracleState ost{Vec(3, 0.0), Vec(3, 0.0)};
  CellState state = CellState::zeros(3);
  Vec zero(3, 0.0);
  for (int t = 0; t < 4; ++t) {
    Tensor x_raw = random_input(4, 1, rng);
    DeepTransitionStepOut out = deep_transition_step(mp, state, x_raw);
    OracleState chain = oracle_lstm_cell(mp.bottom[0], ost, oracle_project_in(mp, x_raw.data));
    for (int i = 1; i < 3; ++i) chain = oracle_lstm_cell(mp.bottom[i], chain, zero);
    ost = chain;
    Vec expect = oracle_project_out(mp, ost.h);
    for (int k = 0; k < 2; ++k) {
      CHECK(out.logits.data[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    }
    state = out.state;
  }
}

TEST_CASE("forward_sequence n = 1 equals one step call") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 2;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.seed = 33;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(34);
  Tensor seq = random_input(1, 3, rng);
  ForwardResult fwd = forward_sequence(mp, cfg, seq);
  Tensor x_raw(3, 1);
  for (int j = 0; j < 3; ++j) x_raw.data[j] = seq(0, j);
  DaStepOut step = da_lstm_step(mp, cfg, CellState::zeros(4), CellState::zeros(4), x_raw);
  for (int k = 0; k < 2; ++k) CHECK(fwd.logits(0, k) == step.logits.data[k]);
}

TEST_CASE("forward_sequence zero network is time invariant") {
  ModelConfig cfg;
  cfg.arch = Arch::deep_transition_lstm;
  cfg.hidden = 4;
  cfg.cells = 2;
  cfg.input_dim = 3;
  cfg.num_classes = 3;
  ModelParams mp = ModelParams::init(cfg);
  mp.visit([](const std::string&, Tensor& t) {
    for (auto& v : t.data) v = 0.0;
  });
  ForwardResult fwd = forward_sequence(mp, cfg, Tensor::zeros(6, 3));
  for (int t = 0; t < 6; ++t) {
    for (int k = 0; k < 3; ++k) CHECK(fwd.logits(t, k) == fwd.logits(0, k));
  }
}

TEST_CASE("forward_sequence rejects empty sequences") {
  ModelConfig cfg;
  cfg.arch = Arch::stacked_lstm;
  cfg.hidden = 2;
  cfg.cells = 1;
  cfg.input_dim = 2;
  cfg.num_classes = 2;
  ModelParams mp = ModelParams::init(cfg);
  CHECK_THROWS_AS(forward_sequence(mp, cfg, Tensor(0, 2)), DataError);
}

TEST_CASE("forward_sequence matches five iterated oracle steps") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 3;
  cfg.input_dim = 3;
  cfg.num_classes = 3;
  cfg.seed = 35;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(36);
  Tensor seq = random_input(5, 3, rng);
  ForwardResult fwd = forward_sequence(mp, cfg, seq);
  OracleDaStates ost;
  ost.bottom = {Vec(4, 0.0), Vec(4, 0.0)};
  ost.top = {Vec(4, 0.0), Vec(4, 0.0)};
  for (int t = 0; t < 5; ++t) {
    Vec x_raw(3);
    for (int j = 0; j < 3; ++j) x_raw[j] = seq(t, j);
    Vec expect = oracle_da_step(mp, cfg, ost, x_raw);
    for (int k = 0; k < 3; ++k) {
      CHECK(fwd.logits(t, k) == doctest::Approx(expect[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("state threading: the unrolled pass equals manual stepping bitwise") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 3;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.seed = 39;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(40);
  Tensor seq = random_input(3, 3, rng);
  ForwardResult fwd = forward_sequence(mp, cfg, seq);
  CellState bottom = CellState::zeros(4), top = CellState::zeros(4);
  for (int t = 0; t < 3; ++t) {
    Tensor x_raw(3, 1);
    for (int j = 0; j < 3; ++j) x_raw.data[j] = seq(t, j);
    DaStepOut out = da_lstm_step(mp, cfg, bottom, top, x_raw);
    for (int k = 0; k < 2; ++k) CHECK(fwd.logits(t, k) == out.logits.data[k]);
    bottom = out.bottom;  // the B_m state produced at t is consumed at t+1
    top = out.top;
  }
}

TEST_CASE("masked-full DA-LSTM with zeroed top coupling equals the deep-transition chain") {
  const int D = 4, m = 3;
  ModelConfig da_cfg;
  da_cfg.arch = Arch::da_lstm;
  da_cfg.hidden = D;
  da_cfg.cells = m;
  da_cfg.input_dim = 3;
  da_cfg.num_classes = 2;
  da_cfg.seed = 47;
  ModelParams da = ModelParams::init(da_cfg);
  // remove the feedback path h_T -> B_m
  CellParams& bm = da.bottom[m - 1];
  bm.Uf = Tensor::zeros(D, D);
  bm.Ui = Tensor::zeros(D, D);
  bm.Uo = Tensor::zeros(D, D);
  bm.Uc = Tensor::zeros(D, D);

  ModelConfig dt_cfg = da_cfg;
  dt_cfg.arch = Arch::deep_transition_lstm;
  ModelParams dt = ModelParams::init(dt_cfg);
  dt.in_W = da.in_W;
  dt.in_b = da.in_b;
  dt.out_W = da.out_W;
  dt.out_b = da.out_b;
  for (int i = 0; i < m; ++i) {
    CellParams& c = dt.bottom[i];
    const CellParams& src = da.bottom[i];
    c.Wf = src.Wf;
    c.Uf = src.Uf;
    c.bf = src.bf;
    c.Wi = src.Wi;
    c.Ui = src.Ui;
    c.bi = src.bi;
    c.Wo = src.Wo;
    c.Uo = src.Uo;
    c.bo = src.bo;
    c.Wc = src.Wc;
    c.Uc = src.Uc;
    c.bc = src.bc;
  }

  Tensor ones(D, 1);
  for (auto& v : ones.data) v = 1.0;
  Rng rng(48);
  CellState da_bottom = CellState::zeros(D), da_top = CellState::zeros(D);
  CellState dt_state = CellState::zeros(D);
  for (int t = 0; t < 5; ++t) {
    Tensor x_raw = random_input(3, 1, rng);
    DaStepOut a = da_lstm_step(da, da_cfg, da_bottom, da_top, x_raw, &ones);
    DeepTransitionStepOut b = deep_transition_step(dt, dt_state, x_raw);
    CHECK(a.bottom.C.data == b.state.C.data);
    CHECK(a.bottom.h.data == b.state.h.data);
    CHECK(a.logits.data == b.logits.data);
    da_bottom = a.bottom;
    da_top = a.top;
    dt_state = b.state;
  }
}

TEST_CASE("parameter count follows the closed formula") {
  auto formula = [](const ModelConfig& cfg, int num_cells, bool gated) {
    int64_t d = cfg.hidden;
    int64_t per_cell = 8 * d * d + 4 * d + (gated ? 2 * d + 1 : 0);
    return cfg.input_dim * d + d + num_cells * per_cell + d * cfg.num_classes + cfg.num_classes;
  };
  {
    ModelConfig cfg;
    cfg.arch = Arch::da_lstm;
    cfg.hidden = 5;
    cfg.cells = 3;
    cfg.input_dim = 7;
    cfg.num_classes = 4;
    CHECK(ModelParams::init(cfg).param_count() == formula(cfg, cfg.cells + 1, true));
  }
  {
    ModelConfig cfg;
    cfg.arch = Arch::stacked_lstm;
    cfg.hidden = 6;
    cfg.cells = 2;
    cfg.input_dim = 3;
    cfg.num_classes = 5;
    CHECK(ModelParams::init(cfg).param_count() == formula(cfg, cfg.cells, false));
  }
  {
    ModelConfig cfg;
    cfg.arch = Arch::deep_transition_lstm;
    cfg.hidden = 4;
    cfg.cells = 4;
    cfg.input_dim = 2;
    cfg.num_classes = 2;
    CHECK(ModelParams::init(cfg).param_count() == formula(cfg, cfg.cells, false));
  }
}

TEST_CASE("permuting output rows permutes logits identically") {
  ModelConfig cfg;
  cfg.arch = Arch::deep_transition_lstm;
  cfg.hidden = 4;
  cfg.cells = 2;
  cfg.input_dim = 3;
  cfg.num_classes = 4;
  cfg.seed = 53;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(54);
  Tensor seq = random_input(4, 3, rng);
  ForwardResult base = forward_sequence(mp, cfg, seq);

  const std::vector<int> perm = {2, 0, 3, 1};
  ModelParams permuted = mp;
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 4; ++j) permuted.out_W(k, j) = mp.out_W(perm[k], j);
    permuted.out_b.data[k] = mp.out_b.data[perm[k]];
  }
  ForwardResult out = forward_sequence(permuted, cfg, seq);
  for (int t = 0; t < 4; ++t) {
    for (int k = 0; k < 4; ++k) CHECK(out.logits(t, k) == base.logits(t, perm[k]));
  }
}

TEST_CASE("da_lstm config with m = 1 is rejected") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 4;
  cfg.cells = 1;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip is bitwise lossless") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 5;
  cfg.cells = 3;
  cfg.input_dim = 4;
  cfg.num_classes = 3;
  cfg.seed = 61;
  cfg.mask.epsilon = 0.02;
  cfg.mask.sharpness = 35.0;
  ModelParams mp = ModelParams::init(cfg);

  std::string path = (std::filesystem::temp_directory_path() / "adaseq_ckpt_test.bin").string();
  save_checkpoint(path, cfg, mp);
  Checkpoint ck = load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(ck.config.arch == cfg.arch);
  CHECK(ck.config.hidden == cfg.hidden);
  CHECK(ck.config.cells == cfg.cells);
  CHECK(ck.config.mask.epsilon == cfg.mask.epsilon);
  CHECK(ck.config.mask.sharpness == cfg.mask.sharpness);

  std::vector<const Tensor*> before, after;
  mp.visit([&before](const std::string&, Tensor& t) { before.push_back(&t); });
  ck.params.visit([&after](const std::string&, Tensor& t) { after.push_back(&t); });
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i]->data == after[i]->data);
}

TEST_CASE("traces carry the analytic per-cell cost") {
  ModelConfig cfg;
  cfg.arch = Arch::da_lstm;
  cfg.hidden = 8;
  cfg.cells = 2;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.seed = 67;
  ModelParams mp = ModelParams::init(cfg);
  Rng rng(68);
  ForwardResult fwd = forward_sequence(mp, cfg, random_input(3, 3, rng));
  for (const StepTrace& st : fwd.traces) {
    REQUIRE(st.cells.size() == 3);
    for (const CellTrace& ct : st.cells) {
      CHECK(ct.gated);
      CHECK(ct.eff_mults == gated_cell_mults(ct.p, 8));
    }
  }
}
