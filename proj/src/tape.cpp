#include "adaseq/tape.hpp"

#include <cmath>

namespace adaseq {

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

bool Tape::any_needs_grad(int a, int b, int c) const {
  if (a >= 0 && nodes_[a].needs_grad) return true;
  if (b >= 0 && nodes_[b].needs_grad) return true;
  if (c >= 0 && nodes_[c].needs_grad) return true;
  return false;
}

int Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(v);
  n.needs_grad = true;
  return push(std::move(n));
}

int Tape::constant(Tensor v) {
  Node n;
  n.op = Op::constant;
  n.value = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  Node n;
  n.op = Op::matmul;
  n.in[0] = a;
  n.in[1] = b;
  n.value = adaseq::matmul(nodes_[a].value, nodes_[b].value);
  n.needs_grad = any_needs_grad(a, b);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::add;
  n.in[0] = a;
  n.in[1] = b;
  n.value = adaseq::add(nodes_[a].value, nodes_[b].value);
  n.needs_grad = any_needs_grad(a, b);
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  Node n;
  n.op = Op::sub;
  n.in[0] = a;
  n.in[1] = b;
  n.value = adaseq::sub(nodes_[a].value, nodes_[b].value);
  n.needs_grad = any_needs_grad(a, b);
  return push(std::move(n));
}

int Tape::emul(int a, int b) {
  Node n;
  n.op = Op::emul;
  n.in[0] = a;
  n.in[1] = b;
  n.value = adaseq::emul(nodes_[a].value, nodes_[b].value);
  n.needs_grad = any_needs_grad(a, b);
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  Node n;
  n.op = Op::scale;
  n.in[0] = a;
  n.c = c;
  n.value = adaseq::scale(nodes_[a].value, c);
  n.needs_grad = any_needs_grad(a);
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  Node n;
  n.op = Op::sigmoid;
  n.in[0] = a;
  n.value = adaseq::sigmoid(nodes_[a].value);
  n.needs_grad = any_needs_grad(a);
  return push(std::move(n));
}

int Tape::tanh(int a) {
  Node n;
  n.op = Op::tanh;
  n.in[0] = a;
  n.value = adaseq::tanh(nodes_[a].value);
  n.needs_grad = any_needs_grad(a);
  return push(std::move(n));
}

int Tape::soft_mask(int p, int D, const MaskConstants& mc) {
  Node n;
  n.op = Op::soft_mask;
  n.in[0] = p;
  n.c = mc.sharpness * static_cast<double>(D);
  n.value = adaseq::soft_mask(nodes_[p].value.data[0], D, mc);
  n.needs_grad = any_needs_grad(p);
  return push(std::move(n));
}

int Tape::blend(int e, int fresh, int old_v) {
  Node n;
  n.op = Op::blend;
  n.in[0] = e;
  n.in[1] = fresh;
  n.in[2] = old_v;
  n.value = adaseq::blend(nodes_[e].value, nodes_[fresh].value, nodes_[old_v].value);
  n.needs_grad = any_needs_grad(e, fresh, old_v);
  return push(std::move(n));
}

int Tape::softmax_ce(int logits, int label) {
  const Tensor& z = nodes_[logits].value;
  if (label < 0 || label >= static_cast<int>(z.size())) {
    throw TrainError("softmax_ce: label " + std::to_string(label) + " out of range for " +
                     std::to_string(z.size()) + " classes");
  }
  double max_z = z.data[0];
  for (double v : z.data) max_z = std::max(max_z, v);
  double sum = 0.0;
  Tensor probs(z.rows, z.cols);
  for (size_t i = 0; i < z.size(); ++i) {
    probs.data[i] = std::exp(z.data[i] - max_z);
    sum += probs.data[i];
  }
  for (size_t i = 0; i < z.size(); ++i) probs.data[i] /= sum;
  Node n;
  n.op = Op::softmax_ce;
  n.in[0] = logits;
  n.label = label;
  n.aux = std::move(probs);
  n.value = Tensor::scalar(-(z.data[label] - max_z - std::log(sum)));
  n.needs_grad = any_needs_grad(logits);
  return push(std::move(n));
}

void Tape::backward(int root, double loss_adjoint) {
  if (replayed_) throw TapeError("backward: tape already replayed");
  replayed_ = true;
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw TapeError("backward: bad root id");
  }

  grads_.assign(nodes_.size(), Tensor());
  std::vector<char> touched(nodes_.size(), 0);
  auto grad_of = [&](int id) -> Tensor& {
    if (!touched[id]) {
      grads_[id] = Tensor(nodes_[id].value.rows, nodes_[id].value.cols);
      touched[id] = 1;
    }
    return grads_[id];
  };

  grad_of(root).data.assign(nodes_[root].value.size(), loss_adjoint);

  for (int id = root; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || !touched[id]) continue;
    const Tensor& g = grads_[id];
    switch (n.op) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::matmul: {
        const Node& a = nodes_[n.in[0]];
        const Node& b = nodes_[n.in[1]];
        const int m = a.value.rows, k = a.value.cols, c = b.value.cols;
        if (a.needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < k; ++j) {
              double acc = 0.0;
              for (int q = 0; q < c; ++q) acc += g(i, q) * b.value(j, q);
              ga(i, j) += acc;
            }
          }
        }
        if (b.needs_grad) {
          Tensor& gb = grad_of(n.in[1]);
          for (int i = 0; i < k; ++i) {
            for (int j = 0; j < c; ++j) {
              double acc = 0.0;
              for (int q = 0; q < m; ++q) acc += a.value(q, i) * g(q, j);
              gb(i, j) += acc;
            }
          }
        }
        break;
      }
      case Op::add: {
        for (int s = 0; s < 2; ++s) {
          if (nodes_[n.in[s]].needs_grad) {
            Tensor& gi = grad_of(n.in[s]);
            for (size_t i = 0; i < g.size(); ++i) gi.data[i] += g.data[i];
          }
        }
        break;
      }
      case Op::sub: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& gb = grad_of(n.in[1]);
          for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        }
        break;
      }
      case Op::emul: {
        const Tensor& av = nodes_[n.in[0]].value;
        const Tensor& bv = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& gb = grad_of(n.in[1]);
          for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
        }
        break;
      }
      case Op::scale: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.c;
        }
        break;
      }
      case Op::sigmoid: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) {
            const double y = n.value.data[i];
            ga.data[i] += g.data[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case Op::tanh: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ga = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) {
            const double y = n.value.data[i];
            ga.data[i] += g.data[i] * (1.0 - y * y);
          }
        }
        break;
      }
      case Op::soft_mask: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& gp = grad_of(n.in[0]);
          double acc = 0.0;
          for (size_t i = 0; i < g.size(); ++i) {
            const double e = n.value.data[i];
            if (e == 0.0 || e == 1.0) continue;  // clipped branch: zero slope
            acc += g.data[i] * n.c * e * (1.0 - e);
          }
          gp.data[0] += acc;
        }
        break;
      }
      case Op::blend: {
        const Tensor& ev = nodes_[n.in[0]].value;
        const Tensor& fv = nodes_[n.in[1]].value;
        const Tensor& ov = nodes_[n.in[2]].value;
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& ge = grad_of(n.in[0]);
          for (size_t i = 0; i < g.size(); ++i) {
            ge.data[i] += g.data[i] * (fv.data[i] - ov.data[i]);
          }
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& gf = grad_of(n.in[1]);
          for (size_t i = 0; i < g.size(); ++i) gf.data[i] += g.data[i] * ev.data[i];
        }
        if (nodes_[n.in[2]].needs_grad) {
          Tensor& go = grad_of(n.in[2]);
          for (size_t i = 0; i < g.size(); ++i) go.data[i] += g.data[i] * (1.0 - ev.data[i]);
        }
        break;
      }
      case Op::softmax_ce: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& gz = grad_of(n.in[0]);
          const double gs = g.data[0];
          for (size_t i = 0; i < gz.size(); ++i) {
            double target = (static_cast<int>(i) == n.label) ? 1.0 : 0.0;
            gz.data[i] += gs * (n.aux.data[i] - target);
          }
        }
        break;
      }
    }
  }
}

const Tensor& Tape::grad(int id) const {
  if (!replayed_) throw TapeError("grad: backward has not run");
  if (grads_[id].size() == 0 && nodes_[id].value.size() != 0) {
    // never reached by the sweep: gradient is exactly zero
    grads_[id] = Tensor(nodes_[id].value.rows, nodes_[id].value.cols);
  }
  return grads_[id];
}

}  // namespace adaseq
