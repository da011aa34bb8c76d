#pragma once

#include <vector>

#include "adaseq/cells.hpp"
#include "adaseq/tensor.hpp"

namespace adaseq {

// Reverse-mode tape over Tensor values. Each recorded node stores its output
// value and the ids of its inputs; backward() replays adjoints in exact
// reverse order. A tape is single-shot: one forward build, one backward.
class Tape {
 public:
  enum class Op : uint8_t {
    leaf,
    constant,
    matmul,
    add,
    sub,
    emul,
    scale,
    sigmoid,
    tanh,
    soft_mask,
    blend,
    softmax_ce,
  };

  // leaves: parameters receive gradients, constants do not
  int leaf(Tensor v);
  int constant(Tensor v);

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int emul(int a, int b);
  int scale(int a, double c);
  int sigmoid(int a);
  int tanh(int a);

  // e_i = thres(sigma(sharpness*(p*D - i))), i = 1..D; the adjoint into p is
  // sharpness*D*e_i*(1-e_i) on middle-branch entries and exactly zero on
  // clipped ones.
  int soft_mask(int p, int D, const MaskConstants& mc);

  // e*fresh + (1-e)*old with exact copies at the clipped endpoints
  int blend(int e, int fresh, int old_v);

  // -log softmax(logits)[label] for one step; logits is a column vector
  int softmax_ce(int logits, int label);

  const Tensor& value(int id) const { return nodes_[id].value; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = loss_adjoint and accumulates adjoints into every
  // node that needs a gradient. Throws TapeError on a second call.
  void backward(int root, double loss_adjoint = 1.0);

  // Adjoint of a node after backward(); zero tensor if the node was never
  // reached by the sweep.
  const Tensor& grad(int id) const;

 private:
  struct Node {
    Op op;
    int in[3] = {-1, -1, -1};
    Tensor value;
    Tensor aux;           // softmax probabilities
    double c = 0.0;       // scale factor or sharpness*D
    int label = -1;
    bool needs_grad = false;
  };

  int push(Node n);
  bool any_needs_grad(int a, int b = -1, int c = -1) const;

  std::vector<Node> nodes_;
  mutable std::vector<Tensor> grads_;
  bool replayed_ = false;
};

}  // namespace adaseq
