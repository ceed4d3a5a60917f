#pragma once

#include <cstdint>

namespace udm {

enum class ScanKernel {
  sequential,
  parallel,
};

// One step of the first-order linear recurrence h_t = abar*h_{t-1} + bx,
// viewed as the affine map h -> abar*h + bx.
struct ScanStep {
  double abar;
  double bx;
};

// Composition "apply s1 first, then s2". Associative; identity is {1, 0}.
inline ScanStep combine(const ScanStep& s1, const ScanStep& s2) {
  return {s1.abar * s2.abar, s2.abar * s1.bx + s2.bx};
}

// h[t] = abar[t]*h[t-1] + bx[t] with h[-1] = 0, left to right.
void scan_sequential(const double* abar, const double* bx, double* h, int64_t n);

// Same recurrence evaluated as a Blelloch up-sweep/down-sweep over the
// affine-map monoid, padded to a power of two with identity elements.
// Work is O(n); agreement with scan_sequential is required to 1e-10.
void scan_parallel(const double* abar, const double* bx, double* h, int64_t n);

}  // namespace udm
