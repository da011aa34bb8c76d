#include "adaseq/tensor.hpp"

#include <cmath>

namespace adaseq {

bool all_finite(const Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) throw DimensionError("matmul", a.shape_str(), b.shape_str());
  Tensor out(a.rows, b.cols);
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    double* out_row = &out.data[static_cast<size_t>(i) * n];
    const double* a_row = &a.data[static_cast<size_t>(i) * k];
    for (int p = 0; p < k; ++p) {
      const double av = a_row[p];
      const double* b_row = &b.data[static_cast<size_t>(p) * n];
      for (int j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("add", a.shape_str(), b.shape_str());
  Tensor out(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("sub", a.shape_str(), b.shape_str());
  Tensor out(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

Tensor emul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("emul", a.shape_str(), b.shape_str());
  Tensor out(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * c;
  return out;
}

double sigmoid(double x) {
  // branch on sign so exp never overflows
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& t) {
  Tensor out(t.rows, t.cols);
  for (size_t i = 0; i < t.size(); ++i) out.data[i] = sigmoid(t.data[i]);
  return out;
}

Tensor tanh(const Tensor& t) {
  Tensor out(t.rows, t.cols);
  for (size_t i = 0; i < t.size(); ++i) out.data[i] = std::tanh(t.data[i]);
  return out;
}

Tensor init_params(int rows, int cols, Rng& rng, Init scheme) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("init_params", std::to_string(rows) + "x" + std::to_string(cols), "positive dims");
  }
  Tensor t(rows, cols);
  if (scheme == Init::zero) return t;
  double s = 1.0 / std::sqrt(static_cast<double>(cols));
  for (size_t i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-s, s);
  return t;
}

Tensor init_params(int rows, int cols, uint64_t seed, Init scheme) {
  Rng rng(seed);
  return init_params(rows, cols, rng, scheme);
}

}  // namespace adaseq
