#include "ops.hpp"

#include <cmath>

#include "ops_common.hpp"

namespace udm {

using detail::Node;
using detail::op_result;
using detail::require_rank;
using detail::require_same_shape;

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Unary op with dy/dx computed from (x, y).
template <typename F, typename G>
Tensor unary_op(const Tensor& x, const char* name, F&& fwd, G&& dydx) {
  const size_t n = static_cast<size_t>(x.numel());
  std::vector<double> out(n);
  const double* px = x.data();
  for (size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);
  return op_result(
      x.shape(), std::move(out), {x.node()},
      [dydx](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.data.size(); ++i) {
          p.grad[i] += self.grad[i] * dydx(p.data[i], self.data[i]);
        }
      },
      name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return op_result(
      a.shape(), std::move(out), {a.node(), b.node()},
      [](Node& self) {
        for (int k = 0; k < 2; ++k) {
          Node& p = *self.parents[k];
          if (!p.requires_grad) continue;
          p.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  return op_result(
      a.shape(), std::move(out), {a.node(), b.node()},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb2 = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb2.requires_grad) {
          pb2.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) pb2.grad[i] -= self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.vec());
  const double* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  return op_result(
      a.shape(), std::move(out), {a.node(), b.node()},
      [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb2 = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * pb2.data[i];
        }
        if (pb2.requires_grad) {
          pb2.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb2.grad[i] += self.grad[i] * pa.data[i];
        }
      },
      "mul");
}

Tensor add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.vec());
  for (double& v : out) v += c;
  return op_result(
      x.shape(), std::move(out), {x.node()},
      [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
      },
      "add_scalar");
}

Tensor mul_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.vec());
  for (double& v : out) v *= c;
  return op_result(
      x.shape(), std::move(out), {x.node()},
      [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
      },
      "mul_scalar");
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("scale_by: scale must hold one element, got " + shape_str(s.shape()));
  }
  const double sv = s.data()[0];
  std::vector<double> out(x.vec());
  for (double& v : out) v *= sv;
  return op_result(
      x.shape(), std::move(out), {x.node(), s.node()},
      [](Node& self) {
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          const double sv2 = ps.data[0];
          for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * sv2;
        }
        if (ps.requires_grad) {
          ps.ensure_grad();
          double acc = 0.0;
          for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px.data[i];
          ps.grad[0] += acc;
        }
      },
      "scale_by");
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, "neg", [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x, "softplus", [](double v) { return stable_softplus(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor silu(const Tensor& x) {
  check_finite(x.data(), static_cast<size_t>(x.numel()), "silu");
  return unary_op(
      x, "silu", [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return op_result(
      {m, n}, std::move(out), {a.node(), b.node()},
      [m, k, n](Node& self) {
        Node& pa2 = *self.parents[0];
        Node& pb2 = *self.parents[1];
        if (pa2.requires_grad) {
          pa2.ensure_grad();
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = self.grad.data() + i * n;
              const double* brow = pb2.data.data() + p * n;
              for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              pa2.grad[i * k + p] += acc;
            }
          }
        }
        if (pb2.requires_grad) {
          pb2.ensure_grad();
          for (int64_t i = 0; i < m; ++i) {
            const double* grow = self.grad.data() + i * n;
            for (int64_t p = 0; p < k; ++p) {
              const double av = pa2.data[i * k + p];
              double* brow = pb2.grad.data() + p * n;
              for (int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
          }
        }
      },
      "matmul");
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const int64_t m = x.extent(0), n = x.extent(1);
  if (bias.extent(0) != m) {
    throw ShapeError("add_row_bias: bias extent " + std::to_string(bias.extent(0)) +
                     " does not match rows " + std::to_string(m));
  }
  std::vector<double> out(x.vec());
  const double* pb = bias.data();
  for (int64_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (int64_t j = 0; j < n; ++j) row[j] += pb[i];
  }
  return op_result(
      {m, n}, std::move(out), {x.node(), bias.node()},
      [m, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pb2 = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (pb2.requires_grad) {
          pb2.ensure_grad();
          for (int64_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* grow = self.grad.data() + i * n;
            for (int64_t j = 0; j < n; ++j) acc += grow[j];
            pb2.grad[i] += acc;
          }
        }
      },
      "add_row_bias");
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  const double* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  return op_result(
      {1}, {acc}, {x.node()},
      [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0];
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
      },
      "sum_all");
}

Tensor mean_all(const Tensor& x) {
  double acc = 0.0;
  const double* px = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  return op_result(
      {1}, {acc / static_cast<double>(n)}, {x.node()},
      [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0] / static_cast<double>(n);
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
      },
      "mean_all");
}

Tensor select_batch(const Tensor& x, int64_t index) {
  require_rank(x, 4, "select_batch");
  const int64_t b = x.extent(0);
  if (index < 0 || index >= b) {
    throw ShapeError("select_batch: index " + std::to_string(index) + " out of range for " +
                     shape_str(x.shape()));
  }
  const int64_t sz = x.numel() / b;
  std::vector<double> out(static_cast<size_t>(sz));
  std::copy_n(x.data() + index * sz, sz, out.data());
  return op_result(
      {x.extent(1), x.extent(2), x.extent(3)}, std::move(out), {x.node()},
      [index, sz](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double* dst = p.grad.data() + index * sz;
        for (int64_t i = 0; i < sz; ++i) dst[i] += self.grad[i];
      },
      "select_batch");
}

Tensor stack_batch(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("stack_batch: empty input list");
  for (const Tensor& t : xs) require_rank(t, 3, "stack_batch");
  const Shape& s0 = xs[0].shape();
  for (const Tensor& t : xs) {
    if (t.shape() != s0) {
      throw ShapeError("stack_batch: mismatched element shapes " + shape_str(s0) + " vs " +
                       shape_str(t.shape()));
    }
  }
  const int64_t b = static_cast<int64_t>(xs.size());
  const int64_t sz = xs[0].numel();
  std::vector<double> out(static_cast<size_t>(b * sz));
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(xs.size());
  for (int64_t i = 0; i < b; ++i) {
    std::copy_n(xs[i].data(), sz, out.data() + i * sz);
    parents.push_back(xs[i].node());
  }
  return op_result(
      {b, s0[0], s0[1], s0[2]}, std::move(out), std::move(parents),
      [sz](Node& self) {
        for (size_t k = 0; k < self.parents.size(); ++k) {
          Node& p = *self.parents[k];
          if (!p.requires_grad) continue;
          p.ensure_grad();
          const double* src = self.grad.data() + static_cast<int64_t>(k) * sz;
          for (int64_t i = 0; i < sz; ++i) p.grad[i] += src[i];
        }
      },
      "stack_batch");
}

}  // namespace udm
