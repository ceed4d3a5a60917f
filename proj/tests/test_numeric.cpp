#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/scan_kernels.hpp"
#include "core/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace udm;
using udm_test::grad_check;
using udm_test::rand_tensor;
using udm_test::weighted_mean;

namespace {

// Independent reference for the selective recurrence: literal per-step state
// update with no scan machinery. Used as the oracle for the fused op.
std::vector<double> naive_selective_scan(const std::vector<double>& x,
                                         const std::vector<double>& delta,
                                         const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         const std::vector<double>& c,
                                         const std::vector<double>& d, int64_t ch,
                                         int64_t len, int64_t ns) {
  std::vector<double> y(static_cast<size_t>(ch * len), 0.0);
  for (int64_t ci = 0; ci < ch; ++ci) {
    std::vector<double> h(static_cast<size_t>(ns), 0.0);
    for (int64_t t = 0; t < len; ++t) {
      const double xt = x[ci * len + t];
      const double dt = delta[ci * len + t];
      double acc = d.empty() ? 0.0 : d[ci] * xt;
      for (int64_t n = 0; n < ns; ++n) {
        double abar, bbar;
        discretize(dt, a[ci * ns + n], b[n * len + t], &abar, &bbar);
        h[static_cast<size_t>(n)] = abar * h[static_cast<size_t>(n)] + bbar * xt;
        acc += c[n * len + t] * h[static_cast<size_t>(n)];
      }
      y[ci * len + t] = acc;
    }
  }
  return y;
}

}  // namespace

TEST_CASE("tensor construction and validation") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.extent(1) == 3);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_data({1, 1, 1, 1, 1}, {1}), ShapeError);
  CHECK_THROWS_AS(Tensor::scalar(1.0).extent(1), ShapeError);
  CHECK(Tensor::scalar(4.25).item() == 4.25);
  CHECK_THROWS_AS(t.item(), ContractError);
  Tensor u;
  CHECK_THROWS_AS(u.numel(), ContractError);
}

TEST_CASE("graph topological order visits each node once, parents first") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = Tensor::scalar(3.0, true);
  Tensor s = add(x, y);
  Tensor z = mul(s, x);
  Tensor loss = mul(z, s);
  Graph g = Graph::build(loss);
  std::unordered_map<const detail::Node*, size_t> pos;
  for (size_t i = 0; i < g.order.size(); ++i) {
    CHECK(pos.count(g.order[i]) == 0);
    pos[g.order[i]] = i;
  }
  for (const detail::Node* n : g.order) {
    for (const auto& p : n->parents) {
      REQUIRE(pos.count(p.get()) == 1);
      CHECK(pos[p.get()] < pos.at(n));
    }
  }
  CHECK(pos.at(loss.node().get()) == g.order.size() - 1);
}

TEST_CASE("backward accumulates additively over repeated use") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = add(x, x);
  backward(y);
  CHECK(x.grad()[0] == 2.0);

  Tensor a = Tensor::scalar(5.0, true);
  Tensor z = mul(a, a);
  backward(z);
  CHECK(a.grad()[0] == 10.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y = add(x, x);
  CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("no-grad mode records no history") {
  Tensor x = Tensor::scalar(1.5, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = mul(x, x);
  }
  CHECK(!y.requires_grad());
  CHECK(y.node()->parents.empty());
  Tensor d = x.detach();
  CHECK(!d.requires_grad());
  Tensor z = mul(d, d);
  CHECK(!z.requires_grad());
}

TEST_CASE("activation values") {
  Tensor one = Tensor::scalar(1.0);
  CHECK(std::abs(silu(one).item() - 0.7310585786300049) < 1e-15);
  CHECK(std::abs(softplus(Tensor::scalar(0.0)).item() - std::log(2.0)) < 1e-15);
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  // Stability at extremes: no overflow, correct saturation.
  CHECK(softplus(Tensor::scalar(800.0)).item() == 800.0);
  CHECK(softplus(Tensor::scalar(-800.0)).item() == 0.0);
  CHECK(sigmoid(Tensor::scalar(-800.0)).item() == 0.0);
  CHECK_THROWS_AS(silu(Tensor::scalar(std::nan(""))), NumericError);
  CHECK_THROWS_AS(silu(Tensor::scalar(INFINITY)), NumericError);
}

TEST_CASE("matmul against hand-computed product") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor y = matmul(a, b);
  CHECK(y.vec() == std::vector<double>{58, 64, 139, 154});
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("elementwise and scalar op gradients") {
  Rng rng(11);
  auto check1 = [&](const char* name, auto opfn) {
    auto f = [&](const std::vector<Tensor>& in) { return weighted_mean(opfn(in[0])); };
    auto res = grad_check(f, {rand_tensor(rng, {3, 4}, -1.5, 1.5)});
    INFO(name, " max rel ", res.max_rel, " at ", res.worst_where);
    CHECK(res.ok());
  };
  check1("neg", [](const Tensor& t) { return neg(t); });
  check1("exp", [](const Tensor& t) { return udm::exp(t); });
  check1("sigmoid", [](const Tensor& t) { return sigmoid(t); });
  check1("softplus", [](const Tensor& t) { return softplus(t); });
  check1("silu", [](const Tensor& t) { return silu(t); });
  check1("add_scalar", [](const Tensor& t) { return add_scalar(t, 0.7); });
  check1("mul_scalar", [](const Tensor& t) { return mul_scalar(t, -1.3); });
  check1("sum_all", [](const Tensor& t) { return sum_all(t); });
  check1("mean_all", [](const Tensor& t) { return mean_all(t); });

  auto f2 = [&](const std::vector<Tensor>& in) { return weighted_mean(add(in[0], in[1])); };
  CHECK(grad_check(f2, {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})}).ok());
  auto f3 = [&](const std::vector<Tensor>& in) { return weighted_mean(sub(in[0], in[1])); };
  CHECK(grad_check(f3, {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})}).ok());
  auto f4 = [&](const std::vector<Tensor>& in) { return weighted_mean(mul(in[0], in[1])); };
  CHECK(grad_check(f4, {rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})}).ok());
  auto f5 = [&](const std::vector<Tensor>& in) {
    return weighted_mean(scale_by(in[0], in[1]));
  };
  CHECK(grad_check(f5, {rand_tensor(rng, {2, 3}), rand_tensor(rng, {1}, 0.5, 1.5)}).ok());
}

TEST_CASE("dense op gradients") {
  Rng rng(12);
  auto fm = [&](const std::vector<Tensor>& in) {
    return weighted_mean(matmul(in[0], in[1]));
  };
  CHECK(grad_check(fm, {rand_tensor(rng, {3, 4}), rand_tensor(rng, {4, 2})}).ok());
  auto fb = [&](const std::vector<Tensor>& in) {
    return weighted_mean(add_row_bias(in[0], in[1]));
  };
  CHECK(grad_check(fb, {rand_tensor(rng, {3, 5}), rand_tensor(rng, {3})}).ok());
}

TEST_CASE("spatial op gradients, rank 3 and rank 4") {
  Rng rng(13);
  auto fcl3 = [&](const std::vector<Tensor>& in) {
    return weighted_mean(channel_linear(in[0], in[1], in[2]));
  };
  CHECK(grad_check(fcl3, {rand_tensor(rng, {3, 2, 2}), rand_tensor(rng, {4, 3}),
                          rand_tensor(rng, {4})})
            .ok());
  auto fcl4 = [&](const std::vector<Tensor>& in) {
    return weighted_mean(channel_linear(in[0], in[1], Tensor()));
  };
  CHECK(grad_check(fcl4, {rand_tensor(rng, {2, 3, 2, 2}), rand_tensor(rng, {2, 3})}).ok());

  auto fln = [&](const std::vector<Tensor>& in) {
    return weighted_mean(layer_norm_channel(in[0], in[1], in[2], 1e-5));
  };
  CHECK(grad_check(fln, {rand_tensor(rng, {4, 2, 3}), rand_tensor(rng, {4}, 0.5, 1.5),
                         rand_tensor(rng, {4})})
            .ok());
  CHECK(grad_check(fln, {rand_tensor(rng, {2, 4, 2, 2}), rand_tensor(rng, {4}, 0.5, 1.5),
                         rand_tensor(rng, {4})})
            .ok());

  auto fdw = [&](const std::vector<Tensor>& in) {
    return weighted_mean(depthwise_conv3x3(in[0], in[1]));
  };
  CHECK(grad_check(fdw, {rand_tensor(rng, {2, 4, 4}), rand_tensor(rng, {2, 3, 3})}).ok());
  CHECK(
      grad_check(fdw, {rand_tensor(rng, {2, 2, 3, 3}), rand_tensor(rng, {2, 3, 3})}).ok());

  auto fsc = [&](const std::vector<Tensor>& in) {
    return weighted_mean(strided_conv(in[0], in[1], in[2], 2));
  };
  CHECK(grad_check(fsc, {rand_tensor(rng, {1, 2, 4, 4}), rand_tensor(rng, {3, 2, 2, 2}),
                         rand_tensor(rng, {3})})
            .ok());

  auto fup = [&](const std::vector<Tensor>& in) {
    return weighted_mean(upsample_nearest(in[0], 2));
  };
  CHECK(grad_check(fup, {rand_tensor(rng, {1, 2, 2, 3})}).ok());

  auto fcc = [&](const std::vector<Tensor>& in) {
    return weighted_mean(concat_channels(in[0], in[1]));
  };
  CHECK(grad_check(fcc, {rand_tensor(rng, {1, 2, 2, 2}), rand_tensor(rng, {1, 3, 2, 2})})
            .ok());

  auto fsm = [&](const std::vector<Tensor>& in) {
    return weighted_mean(softmax_channel(in[0]));
  };
  CHECK(grad_check(fsm, {rand_tensor(rng, {1, 3, 2, 2}, -2, 2)}).ok());
  auto flsm = [&](const std::vector<Tensor>& in) {
    return weighted_mean(log_softmax_channel(in[0]));
  };
  CHECK(grad_check(flsm, {rand_tensor(rng, {1, 3, 2, 2}, -2, 2)}).ok());

  auto fsel = [&](const std::vector<Tensor>& in) {
    return weighted_mean(select_batch(in[0], 1));
  };
  CHECK(grad_check(fsel, {rand_tensor(rng, {3, 2, 2, 2})}).ok());
  auto fstk = [&](const std::vector<Tensor>& in) {
    return weighted_mean(stack_batch({in[0], in[1]}));
  };
  CHECK(grad_check(fstk, {rand_tensor(rng, {2, 2, 2}), rand_tensor(rng, {2, 2, 2})}).ok());
}

TEST_CASE("spatial op forward semantics") {
  // Nearest upsampling replicates; strided conv partitions into patches.
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor up = upsample_nearest(x, 2);
  CHECK(up.vec() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

  Tensor w = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor y = strided_conv(up, w, Tensor(), 2);
  CHECK(y.vec() == std::vector<double>{4, 8, 12, 16});
  CHECK_THROWS_AS(strided_conv(x, Tensor::from_data({1, 1, 3, 3}, std::vector<double>(9, 1.0)),
                               Tensor(), 3),
                  ShapeError);

  Tensor softmax_in = Tensor::from_data({1, 2, 1, 1}, {1000.0, 1000.0});
  Tensor p = softmax_channel(softmax_in);
  CHECK(p.vec()[0] == 0.5);

  Tensor a = Tensor::from_data({1, 1, 1, 2}, {1, 2});
  Tensor b = Tensor::from_data({1, 2, 1, 2}, {3, 4, 5, 6});
  CHECK(concat_channels(a, b).vec() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(select_batch(stack_batch({Tensor::from_data({1, 1, 2}, {7, 8}),
                                  Tensor::from_data({1, 1, 2}, {9, 10})}),
                     1)
            .vec() == std::vector<double>{9, 10});
}

TEST_CASE("scan combine is associative and identity-padded") {
  Rng rng(21);
  for (int it = 0; it < 200; ++it) {
    ScanStep s1{rng.uniform(-1, 1), rng.uniform(-2, 2)};
    ScanStep s2{rng.uniform(-1, 1), rng.uniform(-2, 2)};
    ScanStep s3{rng.uniform(-1, 1), rng.uniform(-2, 2)};
    ScanStep l = combine(combine(s1, s2), s3);
    ScanStep r = combine(s1, combine(s2, s3));
    CHECK(udm_test::rel_err(l.abar, r.abar) < 1e-12);
    CHECK(udm_test::rel_err(l.bx, r.bx) < 1e-12);
  }
  ScanStep id{1.0, 0.0};
  ScanStep s{0.37, -1.25};
  CHECK(combine(id, s).abar == s.abar);
  CHECK(combine(id, s).bx == s.bx);
  CHECK(combine(s, id).abar == s.abar);
  CHECK(combine(s, id).bx == s.bx);
}

TEST_CASE("parallel scan matches sequential scan on non-power-of-two lengths") {
  Rng rng(22);
  for (int64_t len : {1, 2, 3, 5, 7, 8, 64, 257}) {
    std::vector<double> abar(static_cast<size_t>(len)), bx(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) {
      abar[static_cast<size_t>(i)] = rng.uniform(0.0, 1.0);
      bx[static_cast<size_t>(i)] = rng.uniform(-1.0, 1.0);
    }
    std::vector<double> hs(static_cast<size_t>(len)), hp(static_cast<size_t>(len));
    scan_sequential(abar.data(), bx.data(), hs.data(), len);
    scan_parallel(abar.data(), bx.data(), hp.data(), len);
    for (int64_t i = 0; i < len; ++i) {
      CHECK(std::abs(hs[static_cast<size_t>(i)] - hp[static_cast<size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("discretization fixed points") {
  double abar, bbar;
  discretize(std::log(2.0), -1.0, 1.0, &abar, &bbar);
  CHECK(std::abs(abar - 0.5) < 1e-15);
  CHECK(std::abs(bbar - 0.5) < 1e-15);

  discretize(0.0, -1.0, 1.0, &abar, &bbar);
  CHECK(abar == 1.0);
  CHECK(bbar == 0.0);

  // The series branch and the closed form agree through the threshold.
  for (double e : {1e-7, 5e-7, 2e-6, 1e-5}) {
    const double a = -0.5;
    const double delta = e / 0.5;
    double ab1, bb1;
    discretize(delta, a, 1.0, &ab1, &bb1);
    const double closed = (std::exp(delta * a) - 1.0) / a;
    CHECK(std::abs(bb1 - closed) < 1e-10);
  }
}

TEST_CASE("permutation gather and scatter") {
  Tensor x = Tensor::from_data({1, 2, 2}, {10, 11, 12, 13});
  std::vector<int64_t> idp{0, 1, 2, 3};
  CHECK(permute_gather(x, idp).vec() == x.vec());

  std::vector<int64_t> p{2, 0, 3, 1};
  Tensor seq = permute_gather(x, p);
  CHECK(seq.vec() == std::vector<double>{12, 10, 13, 11});
  Tensor back = permute_scatter(seq, p, 2, 2);
  CHECK(back.vec() == x.vec());

  CHECK_THROWS_AS(permute_gather(x, {0, 1, 2}), PermutationError);
  CHECK_THROWS_AS(permute_gather(x, {0, 1, 2, 4}), PermutationError);
  CHECK_THROWS_AS(permute_gather(x, {0, 1, 2, 2}), PermutationError);
  CHECK_THROWS_AS(permute_scatter(seq, p, 3, 2), ShapeError);

  Rng rng(23);
  auto fg = [&](const std::vector<Tensor>& in) {
    return weighted_mean(permute_gather(in[0], {3, 1, 0, 2, 5, 4}));
  };
  CHECK(grad_check(fg, {rand_tensor(rng, {2, 2, 3})}).ok());
  auto fs = [&](const std::vector<Tensor>& in) {
    return weighted_mean(permute_scatter(in[0], {3, 1, 0, 2, 5, 4}, 2, 3));
  };
  CHECK(grad_check(fs, {rand_tensor(rng, {2, 6})}).ok());
}

TEST_CASE("selective scan matches the naive recurrence") {
  Rng rng(24);
  for (int round = 0; round < 8; ++round) {
    const int64_t ch = 1 + static_cast<int64_t>(rng.uniform_int(0, 3));
    const int64_t len = 1 + static_cast<int64_t>(rng.uniform_int(0, 30));
    const int64_t ns = 1 + static_cast<int64_t>(rng.uniform_int(0, 4));
    Tensor x = rand_tensor(rng, {ch, len});
    Tensor delta = rand_tensor(rng, {ch, len}, 0.05, 0.9);
    Tensor a = rand_tensor(rng, {ch, ns}, -2.0, -0.2);
    Tensor b = rand_tensor(rng, {ns, len});
    Tensor c = rand_tensor(rng, {ns, len});
    const bool with_d = round % 2 == 0;
    Tensor d = with_d ? rand_tensor(rng, {ch}) : Tensor();
    std::vector<double> ref = naive_selective_scan(
        x.vec(), delta.vec(), a.vec(), b.vec(), c.vec(),
        with_d ? d.vec() : std::vector<double>{}, ch, len, ns);
    for (ScanKernel k : {ScanKernel::sequential, ScanKernel::parallel}) {
      Tensor y = selective_scan(x, delta, a, b, c, d, k);
      REQUIRE(y.shape() == Shape{ch, len});
      for (int64_t i = 0; i < y.numel(); ++i) {
        CHECK(std::abs(y.data()[i] - ref[static_cast<size_t>(i)]) < 1e-10);
      }
    }
  }
}

TEST_CASE("selective scan worked example") {
  // abar = bbar = 0.5 via delta = ln 2, a = -1, b = 1; readout c = 1, no d.
  const double ln2 = std::log(2.0);
  Tensor x = Tensor::from_data({1, 2}, {1, 1});
  Tensor delta = Tensor::from_data({1, 2}, {ln2, ln2});
  Tensor a = Tensor::from_data({1, 1}, {-1.0});
  Tensor b = Tensor::from_data({1, 2}, {1, 1});
  Tensor c = Tensor::from_data({1, 2}, {1, 1});
  Tensor y = selective_scan(x, delta, a, b, c, Tensor(), ScanKernel::sequential);
  CHECK(std::abs(y.data()[0] - 0.5) < 1e-15);
  CHECK(std::abs(y.data()[1] - 0.75) < 1e-15);
}

TEST_CASE("selective scan gradients, closed and series branches") {
  Rng rng(25);
  for (ScanKernel k : {ScanKernel::sequential, ScanKernel::parallel}) {
    auto f = [k](const std::vector<Tensor>& in) {
      return weighted_mean(
          selective_scan(in[0], in[1], in[2], in[3], in[4], in[5], k));
    };
    auto res = grad_check(f, {rand_tensor(rng, {2, 5}), rand_tensor(rng, {2, 5}, 0.1, 0.8),
                              rand_tensor(rng, {2, 3}, -2.0, -0.5),
                              rand_tensor(rng, {3, 5}), rand_tensor(rng, {3, 5}),
                              rand_tensor(rng, {2})});
    INFO("closed branch kernel ", static_cast<int>(k), " max rel ", res.max_rel);
    CHECK(res.ok());
  }
  // Tiny |delta*a| keeps every step on the series branch even under FD
  // perturbation of delta (|a| small bounds |e| well below the threshold).
  auto fs = [](const std::vector<Tensor>& in) {
    return weighted_mean(selective_scan(in[0], in[1], in[2], in[3], in[4], Tensor(),
                                        ScanKernel::sequential));
  };
  auto res = grad_check(fs, {rand_tensor(rng, {1, 4}), rand_tensor(rng, {1, 4}, 1e-9, 1e-8),
                             rand_tensor(rng, {1, 2}, -0.05, -0.01),
                             rand_tensor(rng, {2, 4}), rand_tensor(rng, {2, 4})});
  INFO("series branch max rel ", res.max_rel);
  CHECK(res.ok());
}

TEST_CASE("selective scan rejects bad shapes and non-finite results") {
  Tensor x = Tensor::from_data({1, 2}, {1, 1});
  Tensor delta = Tensor::from_data({1, 2}, {0.1, 0.1});
  Tensor a = Tensor::from_data({1, 1}, {-1.0});
  Tensor b = Tensor::from_data({1, 2}, {1, 1});
  CHECK_THROWS_AS(selective_scan(x, delta, a, b, Tensor::from_data({1, 3}, {1, 1, 1}),
                                 Tensor(), ScanKernel::sequential),
                  ShapeError);
  CHECK_THROWS_AS(selective_scan(x, Tensor::from_data({2, 1}, {1, 1}), a, b, b, Tensor(),
                                 ScanKernel::sequential),
                  ShapeError);
  Tensor bad_delta = Tensor::from_data({1, 2}, {1e308, 1e308});
  Tensor pos_a = Tensor::from_data({1, 1}, {700.0});
  CHECK_THROWS_AS(
      selective_scan(x, bad_delta, pos_a, b, b, Tensor(), ScanKernel::sequential),
      NumericError);
}

TEST_CASE("cosine similarity mean: range, identity, guard") {
  Rng rng(26);
  Tensor a = rand_tensor(rng, {3, 2, 2});
  CHECK(std::abs(cosine_sim_channel_mean(a, a).item() - 1.0) < 1e-12);
  Tensor b = rand_tensor(rng, {3, 2, 2});
  const double v = cosine_sim_channel_mean(a, b).item();
  CHECK(v >= -1.0 - 1e-12);
  CHECK(v <= 1.0 + 1e-12);
  // Opposite vectors hit -1 exactly.
  CHECK(std::abs(cosine_sim_channel_mean(a, mul_scalar(a, -2.0)).item() + 1.0) < 1e-12);
  // Zero against zero is guarded to 0, not NaN.
  Tensor z = Tensor::zeros({3, 2, 2});
  CHECK(cosine_sim_channel_mean(z, z).item() == 0.0);

  auto f = [](const std::vector<Tensor>& in) {
    return cosine_sim_channel_mean(in[0], in[1]);
  };
  auto res = grad_check(f, {rand_tensor(rng, {3, 2, 2}), rand_tensor(rng, {3, 2, 2})});
  INFO("cosine max rel ", res.max_rel);
  CHECK(res.ok());
  auto res4 = grad_check(f, {rand_tensor(rng, {2, 3, 2, 2}), rand_tensor(rng, {2, 3, 2, 2})});
  CHECK(res4.ok());
}

TEST_CASE("forward and backward are deterministic across repeats") {
  auto run = [] {
    Rng rng(27);
    Tensor x = rand_tensor(rng, {2, 6});
    x.set_requires_grad(true);
    Tensor delta = rand_tensor(rng, {2, 6}, 0.1, 0.6);
    Tensor a = rand_tensor(rng, {2, 2}, -1.5, -0.3);
    Tensor b = rand_tensor(rng, {2, 6});
    Tensor c = rand_tensor(rng, {2, 6});
    Tensor y = selective_scan(x, delta, a, b, c, Tensor(), ScanKernel::parallel);
    Tensor loss = mean_all(mul(y, y));
    backward(loss);
    std::vector<double> out = y.vec();
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}
