#include "scan_order.hpp"

#include <algorithm>

#include "error.hpp"

namespace udm {

namespace {

void check_ranking(const std::vector<int64_t>& idx, int64_t n, const char* op) {
  if (static_cast<int64_t>(idx.size()) != n) {
    throw PermutationError(std::string(op) + ": ranking length " +
                           std::to_string(idx.size()) + " != " + std::to_string(n));
  }
  std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
  for (int64_t v : idx) {
    if (v < 0 || v >= n || seen[static_cast<size_t>(v)]) {
      throw PermutationError(std::string(op) + ": ranking is not a bijection");
    }
    seen[static_cast<size_t>(v)] = 1;
  }
}

}  // namespace

ScanOrders build_scan_orders(const std::vector<int64_t>& idx, int64_t h, int64_t w) {
  const int64_t n = h * w;
  if (h < 1 || w < 1) throw ShapeError("build_scan_orders: empty grid");
  check_ranking(idx, n, "build_scan_orders");
  ScanOrders o;
  o.h = h;
  o.w = w;
  o.p[0] = idx;
  // Walk the ranking grid down columns: sequence position k sits at grid row
  // k mod h, column k / h.
  o.p[1].resize(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    o.p[1][static_cast<size_t>(k)] = idx[static_cast<size_t>((k % h) * w + k / h)];
  }
  o.p[2].assign(o.p[0].rbegin(), o.p[0].rend());
  o.p[3].assign(o.p[1].rbegin(), o.p[1].rend());
  return o;
}

ScanOrders raster_orders(int64_t h, int64_t w) {
  std::vector<int64_t> identity(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) identity[static_cast<size_t>(i)] = i;
  // Row-major ranking makes branch 0 the raster walk and branch 1 the exact
  // column-major walk: p2[k] = (k mod h)*w + k/h.
  return build_scan_orders(identity, h, w);
}

std::vector<int64_t> invert_permutation(const std::vector<int64_t>& p) {
  const int64_t n = static_cast<int64_t>(p.size());
  std::vector<int64_t> inv(p.size());
  std::vector<uint8_t> seen(p.size(), 0);
  for (int64_t k = 0; k < n; ++k) {
    const int64_t v = p[static_cast<size_t>(k)];
    if (v < 0 || v >= n || seen[static_cast<size_t>(v)]) {
      throw PermutationError("invert_permutation: input is not a bijection");
    }
    seen[static_cast<size_t>(v)] = 1;
    inv[static_cast<size_t>(v)] = k;
  }
  return inv;
}

}  // namespace udm
