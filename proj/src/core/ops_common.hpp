#pragma once

// Internal helpers shared by the op translation units. Not part of the
// library surface.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace udm::detail {

// Wires an op output into the graph. Parents and backward_fn are recorded
// only when grad mode is on and at least one parent participates, so no-grad
// forwards build no history.
inline Tensor op_result(Shape shape, std::vector<double> data,
                        std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backward_fn, const char* op) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  Node& n = *out.node();
  n.op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) {
    if (p && p->requires_grad) {
      any = true;
      break;
    }
  }
  if (!any) return out;
  n.requires_grad = true;
  n.parents = std::move(parents);
  n.backward_fn = std::move(backward_fn);
  return out;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

inline void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

// Uniform view of [C,H,W] and [B,C,H,W] inputs for per-position channel ops.
struct SpatialDims {
  int64_t b;
  int64_t c;
  int64_t h;
  int64_t w;
  bool batched;

  int64_t positions() const { return h * w; }
};

inline SpatialDims spatial_dims(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {1, x.extent(0), x.extent(1), x.extent(2), false};
  if (x.rank() == 4) return {x.extent(0), x.extent(1), x.extent(2), x.extent(3), true};
  throw ShapeError(std::string(op) + ": expected rank 3 or 4, got " + shape_str(x.shape()));
}

}  // namespace udm::detail
