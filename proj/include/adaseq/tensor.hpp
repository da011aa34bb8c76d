#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "adaseq/error.hpp"
#include "adaseq/rng.hpp"

namespace adaseq {

// Dense row-major matrix of doubles. Vectors are D x 1 columns (or 1 x D rows
// for the portion-gate parameters). The only numeric carrier in the project.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor column(const std::vector<double>& v) {
    Tensor t(static_cast<int>(v.size()), 1);
    t.data = v;
    return t;
  }

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

bool all_finite(const Tensor& t);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor emul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

double sigmoid(double x);  // numerically stable, no overflow at saturation
Tensor sigmoid(const Tensor& t);
Tensor tanh(const Tensor& t);

enum class Init { uniform_scaled, zero };

// uniform in [-s, s] with s = 1/sqrt(cols); deterministic for a fixed seed
Tensor init_params(int rows, int cols, uint64_t seed, Init scheme);
Tensor init_params(int rows, int cols, Rng& rng, Init scheme);

}  // namespace adaseq
