#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsgcn/gradcheck.hpp"
#include "tsgcn/graph.hpp"
#include "tsgcn/layers.hpp"

using namespace tsgcn;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

Var weighted_sum(const Var& y, const Tensor& weights) {
  return ops::sum(ops::mul(y, y.tape().constant(weights)));
}

JointLayout random_layout(std::mt19937_64& rng, std::size_t max_joints) {
  const std::size_t n = 1 + rng() % max_joints;
  JointLayout l{"r", n, {}, 0};
  for (std::size_t v = 1; v < n; ++v) l.edges.emplace_back(rng() % v, v);
  return l;
}

double sq_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s;
}

// Per-node aggregation written directly from the neighbor sets:
//   out[o][t][v] = sum_{u in B(v)} A[v][u] M[v][u] sum_i W[i][o] x[i][t][u]
Tensor sgc_brute_force(const Tensor& x, const Tensor& w, const Tensor& a, const Tensor& m,
                       const SkeletonGraph& g) {
  const std::size_t Ci = x.dim(0), T = x.dim(1), V = x.dim(2), Co = w.dim(1);
  Tensor out({Co, T, V});
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t v = 0; v < V; ++v) {
        double acc = 0.0;
        for (std::size_t u : g.neighbors(v)) {
          double embedded = 0.0;
          for (std::size_t i = 0; i < Ci; ++i) embedded += w(i, o) * x(i, t, u);
          acc += a(v, u) * m(v, u) * embedded;
        }
        out(o, t, v) = acc;
      }
  return out;
}

// Zero-padded dense k x 1 convolution with kernel[o][i][s] = pw[i][o] * dw[i][s].
Tensor rank_constrained_dense(const Tensor& x, const Tensor& dw, const Tensor& pw, const Tensor& bias) {
  const std::size_t Ci = x.dim(0), T = x.dim(1), V = x.dim(2), Co = pw.dim(1), K = dw.dim(1);
  const long half = static_cast<long>(K / 2);
  Tensor out({Co, T, V});
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t v = 0; v < V; ++v) {
        double acc = bias[o];
        for (std::size_t i = 0; i < Ci; ++i)
          for (std::size_t s = 0; s < K; ++s) {
            const long src = static_cast<long>(t) + static_cast<long>(s) - half;
            if (src < 0 || src >= static_cast<long>(T)) continue;
            acc += pw(i, o) * dw(i, s) * x(i, static_cast<std::size_t>(src), v);
          }
        out(o, t, v) = acc;
      }
  return out;
}

Tensor identity_matrix(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("SGC with identity adjacency and weight returns its input") {
    std::mt19937_64 rng(1);
    SgcLayer sgc("sgc", 3, 3, normalized_adjacency(JointLayout{"e", 4, {}, 0}), rng);
    sgc.weight.value = identity_matrix(3);
    const Tensor x = random_tensor({3, 5, 4}, rng);
    Tape tape;
    CHECK(testing::bit_equal(sgc.forward(tape, tape.constant(x)).value(), x));
  }

  TEST_CASE("SGC on two connected joints averages them") {
    std::mt19937_64 rng(1);
    SgcLayer sgc("sgc", 1, 1, normalized_adjacency(JointLayout{"p", 2, {{0, 1}}, 0}), rng);
    sgc.weight.value = Tensor({1, 1}, 1.0);
    Tape tape;
    const auto y = sgc.forward(tape, tape.constant(Tensor({1, 1, 2}, std::vector<double>{1, 3}))).value();
    CHECK(std::abs(y(0, 0, 0) - 2.0) <= 1e-15);
    CHECK(std::abs(y(0, 0, 1) - 2.0) <= 1e-15);
  }

  TEST_CASE("SGC matches the per-node neighbor-set loop on 50 random graphs") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      const auto layout = random_layout(rng, 6);
      const auto graph = build_graph(layout);
      const std::size_t Ci = 1 + rng() % 4, Co = 1 + rng() % 4, T = 1 + rng() % 5;
      SgcLayer sgc("sgc", Ci, Co, normalized_adjacency(layout), rng);
      sgc.mask.value = random_tensor(sgc.mask.value.shape(), rng, 0.0, 2.0);
      const Tensor x = random_tensor({Ci, T, layout.joint_count}, rng);
      Tape tape;
      const auto got = sgc.forward(tape, tape.constant(x)).value();
      const auto want = sgc_brute_force(x, sgc.weight.value, sgc.adjacency(), sgc.mask.value, graph);
      worst = std::max(worst, max_abs_diff(got, want));
    }
    CHECK(worst <= 1e-10);
  }

  TEST_CASE("SGC mask starts at ones") {
    std::mt19937_64 rng(1);
    SgcLayer sgc("sgc", 2, 2, normalized_adjacency(coco18_layout()), rng);
    CHECK(sgc.mask.value == Tensor({18, 18}, 1.0));
  }

  TEST_CASE("Sep-TCN with a delta kernel, identity mixing and zero bias is the identity") {
    std::mt19937_64 rng(2);
    SepTcnLayer tcn("t", 3, 3, 3, rng);
    tcn.depthwise.value = Tensor({3, 3}, std::vector<double>{0, 1, 0, 0, 1, 0, 0, 1, 0});
    tcn.pointwise.value = identity_matrix(3);
    const Tensor x = random_tensor({3, 7, 2}, rng);
    Tape tape;
    CHECK(testing::bit_equal(tcn.forward(tape, tape.constant(x)).value(), x));
  }

  TEST_CASE("depthwise kernel (1,1,1) on a constant input gives 3c on interior frames") {
    Tape tape;
    const double c = 1.75;
    const auto y = ops::depthwise_temporal_conv(tape.constant(Tensor({2, 6, 3}, c)),
                                                tape.constant(Tensor({2, 3}, 1.0)))
                       .value();
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t t = 1; t < 5; ++t)
        for (std::size_t v = 0; v < 3; ++v) CHECK(y(ch, t, v) == 3.0 * c);
  }

  TEST_CASE("Sep-TCN equals the rank-constrained dense convolution") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(100 + seed);
      const std::size_t Ci = 1 + rng() % 5, Co = 1 + rng() % 5, T = 1 + rng() % 9, V = 1 + rng() % 4;
      const std::size_t K = 1 + 2 * (rng() % 3);
      SepTcnLayer tcn("t", Ci, Co, K, rng);
      tcn.bias.value = random_tensor({Co}, rng);
      const Tensor x = random_tensor({Ci, T, V}, rng);
      Tape tape;
      const auto got = tcn.forward(tape, tape.constant(x)).value();
      const auto want = rank_constrained_dense(x, tcn.depthwise.value, tcn.pointwise.value, tcn.bias.value);
      worst = std::max(worst, max_abs_diff(got, want));

      // The production dense layer agrees when handed the composed kernel.
      DenseTcnLayer dense("d", Ci, Co, K, rng);
      for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t i = 0; i < Ci; ++i)
          for (std::size_t s = 0; s < K; ++s)
            dense.kernel.value(o, i, s) = tcn.pointwise.value(i, o) * tcn.depthwise.value(i, s);
      dense.bias.value = tcn.bias.value;
      worst = std::max(worst, max_abs_diff(dense.forward(tape, tape.constant(x)).value(), want));
    }
    CHECK(worst <= 1e-10);
  }

  TEST_CASE("temporal multiply counts") {
    const auto f = septcn_flops(64, 64, 1, 1, 3);
    CHECK(f.separable_per_position == 4288);
    CHECK(f.dense_per_position == 12288);
    CHECK(f.reduction() == doctest::Approx(2.87).epsilon(0.002));
    const auto one = septcn_flops(1, 1, 1, 1, 3);
    CHECK(one.separable_per_position == 4);
    CHECK(one.dense_per_position == 3);
    const auto k1 = septcn_flops(8, 16, 1, 1, 1);
    CHECK(k1.separable_per_position == k1.dense_per_position + 8);
    const auto big = septcn_flops(64, 64, 32, 18, 3);
    CHECK(big.separable == 4288ULL * 32 * 18);
    CHECK(big.dense == 12288ULL * 32 * 18);
  }

  TEST_CASE("separable is cheaper whenever C_out exceeds k/(k-1)") {
    for (std::size_t k : {3, 5, 7})
      for (std::size_t ci = 1; ci <= 16; ++ci)
        for (std::size_t co = 1; co <= 16; ++co) {
          const auto f = septcn_flops(ci, co, 1, 1, k);
          const bool cheaper = f.separable_per_position < f.dense_per_position;
          CHECK(cheaper == (co * (k - 1) > k));
        }
  }

  TEST_CASE("block with identity stages on all-ones input gives 3") {
    std::mt19937_64 rng(4);
    const std::size_t C = 2, V = 3;
    GstcnBlock block("b", C, C, normalized_adjacency(JointLayout{"e", V, {}, 0}), BlockOptions{}, rng);
    block.sgc.weight.value = identity_matrix(C);
    auto& tcn = std::get<SepTcnLayer>(block.temporal);
    tcn.depthwise.value = Tensor({C, 3}, std::vector<double>{0, 1, 0, 0, 1, 0});
    tcn.pointwise.value = identity_matrix(C);
    CHECK_FALSE(block.projection.has_value());
    Tape tape;
    const auto y = block.forward(tape, tape.constant(Tensor({C, 4, V}, 1.0)), MaskingConfig{}).value();
    CHECK(y == Tensor({C, 4, V}, 3.0));

    BlockOptions with_spatial;
    with_spatial.spatial_pool_residual = true;
    GstcnBlock block2("b", C, C, normalized_adjacency(JointLayout{"e", V, {}, 0}), with_spatial, rng);
    block2.sgc = block.sgc;
    block2.temporal = block.temporal;
    const auto y2 = block2.forward(tape, tape.constant(Tensor({C, 4, V}, 1.0)), MaskingConfig{}).value();
    CHECK(y2 == Tensor({C, 4, V}, 4.0));
  }

  TEST_CASE("block output is zero when every pre-activation is negative") {
    std::mt19937_64 rng(4);
    GstcnBlock block("b", 2, 2, normalized_adjacency(JointLayout{"e", 3, {}, 0}), BlockOptions{}, rng);
    block.sgc.weight.value = identity_matrix(2);
    auto& tcn = std::get<SepTcnLayer>(block.temporal);
    tcn.depthwise.value = Tensor({2, 3}, std::vector<double>{0, 1, 0, 0, 1, 0});
    tcn.pointwise.value = identity_matrix(2);
    Tape tape;
    const auto y = block.forward(tape, tape.constant(Tensor({2, 4, 3}, -1.0)), MaskingConfig{}).value();
    CHECK(y == Tensor({2, 4, 3}, 0.0));
  }

  TEST_CASE("blocks preserve T and V") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const auto layout = random_layout(rng, 7);
      const std::size_t Ci = 1 + rng() % 4, Co = 1 + rng() % 4, T = 1 + rng() % 6;
      BlockOptions o;
      o.temporal_conv = trial % 2 ? TemporalConvKind::dense : TemporalConvKind::separable;
      GstcnBlock block("b", Ci, Co, normalized_adjacency(layout), o, rng);
      Tape tape;
      const auto y = block.forward(tape, tape.constant(random_tensor({Ci, T, layout.joint_count}, rng)),
                                   MaskingConfig{});
      CHECK(y.shape() == Shape{Co, T, layout.joint_count});
    }
    CHECK_THROWS(GstcnBlock("b", 1, 1, Tensor({1, 1}, 1.0), BlockOptions{TemporalConvKind::separable, 4}, rng));
  }

  TEST_CASE("block gradients pass the finite-difference check (3 joints, T = 6)") {
    for (auto kind : {TemporalConvKind::separable, TemporalConvKind::dense}) {
      std::mt19937_64 rng(8);
      BlockOptions o;
      o.temporal_conv = kind;
      o.spatial_pool_residual = true;
      GstcnBlock block("b", 2, 3, normalized_adjacency(JointLayout{"c", 3, {{0, 1}, {1, 2}}, 0}), o, rng);
      const Tensor x = random_tensor({2, 6, 3}, rng);
      const Tensor w = random_tensor({3, 6, 3}, rng);
      std::vector<Parameter*> params;
      block.collect(params);
      const auto r = grad_check(
          [&](Tape& tape) { return weighted_sum(block.forward(tape, tape.constant(x), MaskingConfig{}), w); },
          params);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.coordinates > 0);
    }
  }

  TEST_CASE("every block parameter receives a nonzero gradient") {
    int all_nonzero = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      GstcnBlock block("b", 2, 4, normalized_adjacency(JointLayout{"c", 4, {{0, 1}, {1, 2}, {2, 3}}, 0}),
                       BlockOptions{}, rng);
      const Tensor x = random_tensor({2, 5, 4}, rng);
      const Tensor w = random_tensor({4, 5, 4}, rng);
      std::vector<Parameter*> params;
      block.collect(params);
      Tape tape;
      tape.backward(weighted_sum(block.forward(tape, tape.constant(x), MaskingConfig{}), w));
      bool ok = true;
      for (const auto* p : params) ok = ok && sq_norm(tape.param_grad(*p)) > 0.0;
      all_nonzero += ok;
    }
    CHECK(all_nonzero >= 19);
  }

  TEST_CASE("masking examples") {
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({2, 5, 4}, rng);
    {
      Tape tape;
      auto in = tape.constant(x);
      CHECK(apply_masking(in, MaskingConfig{0.0, 0.0, true, 9}).value() == x);
      CHECK(apply_masking(in, MaskingConfig{0.7, 0.7, false, 9}).value() == x);
      CHECK(apply_masking(in, MaskingConfig{1.0, 0.0, true, 9}).value() == Tensor(x.shape(), 0.0));
      CHECK(apply_masking(in, MaskingConfig{0.0, 1.0, true, 9}).value() == Tensor(x.shape(), 0.0));
    }
    {
      Tape frozen(0, /*stochastic=*/false);
      CHECK(apply_masking(frozen.constant(x), MaskingConfig{0.7, 0.7, true, 9}).value() == x);
    }
    const auto a = masking_pattern({2, 40, 18}, MaskingConfig{0.3, 0.3, true, 5});
    const auto b = masking_pattern({2, 40, 18}, MaskingConfig{0.3, 0.3, true, 5});
    const auto c = masking_pattern({2, 40, 18}, MaskingConfig{0.3, 0.3, true, 6});
    CHECK(a == b);
    CHECK_FALSE(a == c);
    // Whole columns and whole frames: each entry is the product of a joint and a frame indicator.
    for (std::size_t t = 0; t < 40; ++t)
      for (std::size_t v = 0; v < 18; ++v) CHECK(a(0, t, v) == a(1, t, v));
    CHECK_THROWS(masking_pattern({2, 3, 4}, MaskingConfig{1.5, 0.0, true, 0}));
  }

  TEST_CASE("masked positions pass no gradient upstream") {
    std::mt19937_64 rng(12);
    const MaskingConfig cfg{0.4, 0.4, true, 77};
    const Tensor x = random_tensor({2, 8, 5}, rng);
    const auto pattern = masking_pattern(x.shape(), cfg);
    double zeros = 0;
    for (double v : pattern.values()) zeros += v == 0.0;
    REQUIRE(zeros > 0);
    SgcLayer sgc("sgc", 2, 3, normalized_adjacency(JointLayout{"c", 5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 0}), rng);
    Tape tape;
    auto in = tape.constant(x, /*requires_grad=*/true);
    tape.backward(weighted_sum(sgc.forward(tape, apply_masking(in, cfg)), random_tensor({3, 8, 5}, rng)));
    const auto g = tape.grad(in);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pattern[i] == 0.0) CHECK(g[i] == 0.0);
    }
  }
}
