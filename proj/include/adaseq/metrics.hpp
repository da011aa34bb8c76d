#pragma once

#include <cmath>
#include <cstdint>

namespace adaseq {

// Analytic multiplication counts for one cell update. A portion-gated cell
// restricts the eight D x D gate products to the active k x k block with
// k = ceil(p*D), plus the two length-D portion-gate dot products. Elementwise
// and activation work is excluded; the dense products dominate.
inline int64_t gated_cell_mults(double p, int D) {
  int64_t k = static_cast<int64_t>(std::ceil(p * static_cast<double>(D)));
  if (k < 0) k = 0;
  if (k > D) k = D;
  return 8 * k * k + 2 * static_cast<int64_t>(D);
}

inline int64_t ungated_cell_mults(int D) {
  return 8 * static_cast<int64_t>(D) * static_cast<int64_t>(D);
}

}  // namespace adaseq
