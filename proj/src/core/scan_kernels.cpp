#include "scan_kernels.hpp"

#include <vector>

#include "error.hpp"

namespace udm {

void scan_sequential(const double* abar, const double* bx, double* h, int64_t n) {
  double state = 0.0;
  for (int64_t t = 0; t < n; ++t) {
    state = abar[t] * state + bx[t];
    h[t] = state;
  }
}

void scan_parallel(const double* abar, const double* bx, double* h, int64_t n) {
  if (n <= 0) return;
  int64_t m = 1;
  while (m < n) m <<= 1;

  // Reused across calls so benchmark timings reflect the sweeps, not malloc.
  thread_local std::vector<double> wa, wb;
  wa.assign(static_cast<size_t>(m), 1.0);
  wb.assign(static_cast<size_t>(m), 0.0);
  for (int64_t t = 0; t < n; ++t) {
    wa[static_cast<size_t>(t)] = abar[t];
    wb[static_cast<size_t>(t)] = bx[t];
  }

  // Up-sweep: each internal node ends up holding the composition of its
  // subtree in sequence order, combine(left, right).
  for (int64_t d = 1; d < m; d <<= 1) {
    for (int64_t i = 2 * d - 1; i < m; i += 2 * d) {
      wb[i] = wb[i - d] * wa[i] + wb[i];
      wa[i] = wa[i - d] * wa[i];
    }
  }

  // Down-sweep: root becomes identity, then each node receives the exclusive
  // prefix of its subtree. Left child inherits the carry, right child gets
  // combine(carry, old left subtree sum).
  wa[m - 1] = 1.0;
  wb[m - 1] = 0.0;
  for (int64_t d = m >> 1; d >= 1; d >>= 1) {
    for (int64_t i = 2 * d - 1; i < m; i += 2 * d) {
      double ta = wa[i - d];
      double tb = wb[i - d];
      wa[i - d] = wa[i];
      wb[i - d] = wb[i];
      wb[i] = wb[i] * ta + tb;
      wa[i] = wa[i] * ta;
    }
  }

  // Inclusive value: apply step t on top of its exclusive prefix. The state
  // starts at zero, so only the offset component survives.
  for (int64_t t = 0; t < n; ++t) {
    h[t] = wb[static_cast<size_t>(t)] * abar[t] + bx[t];
  }
}

}  // namespace udm
