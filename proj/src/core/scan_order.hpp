#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace udm {

// Four pixel traversal orders over an h x w grid, each a bijection on flat
// row-major indices. Branch 0 walks the ranking as given (most uncertain
// first); branch 1 walks the same ranking laid out as an h x w grid in
// column-major order, which interleaves rank strata; branches 2 and 3 are the
// exact reversals of 0 and 1 (least uncertain first).
struct ScanOrders {
  std::array<std::vector<int64_t>, 4> p;
  int64_t h = 0;
  int64_t w = 0;

  // Column step of the branch-1 walk through the ranking grid.
  int64_t skip_stride() const { return w; }
};

// idx is a pixel ranking (bijection on [0, h*w)), typically descending
// uncertainty. p1[k] = idx[k]; p2[k] = idx[(k mod h)*w + k/h]; p3/p4 reverse.
ScanOrders build_scan_orders(const std::vector<int64_t>& idx, int64_t h, int64_t w);

// Content-independent baseline: branch 0 row-major, branch 1 column-major,
// branches 2/3 their reversals.
ScanOrders raster_orders(int64_t h, int64_t w);

std::vector<int64_t> invert_permutation(const std::vector<int64_t>& p);

}  // namespace udm
