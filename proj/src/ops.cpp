#include "tsgcn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tsgcn::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(x.shape()));
  }
}

bool same_tape(const Var& a, const Var& b) { return &a.tape() == &b.tape(); }

void require_same_tape(const char* op, const Var& a, const Var& b) {
  if (!same_tape(a, b)) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  require_same_tape("matmul", a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = ta ? av.dim(1) : av.dim(0);
  const std::size_t k = ta ? av.dim(0) : av.dim(1);
  const std::size_t kb = tb ? bv.dim(1) : bv.dim(0);
  const std::size_t n = tb ? bv.dim(0) : bv.dim(1);
  if (k != kb) mismatch("matmul", av.shape(), bv.shape());

  auto A = as_matrix(av, av.dim(0), av.dim(1));
  auto B = as_matrix(bv, bv.dim(0), bv.dim(1));
  Tensor out({m, n});
  auto C = as_matrix(out, m, n);
  if (!ta && !tb) C.noalias() = A * B;
  else if (ta && !tb) C.noalias() = A.transpose() * B;
  else if (!ta && tb) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();

  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
      [ia, ib, ta, tb, m, n](Tape& tape, const Tensor& g) {
        const auto& av = tape.value(ia);
        const auto& bv = tape.value(ib);
        auto A = as_matrix(av, av.dim(0), av.dim(1));
        auto B = as_matrix(bv, bv.dim(0), bv.dim(1));
        auto G = as_matrix(g, m, n);
        if (tape.requires_grad(ia)) {
          auto& ga = tape.grad_buffer(ia);
          auto GA = as_matrix(ga, ga.dim(0), ga.dim(1));
          if (!ta && !tb) GA.noalias() += G * B.transpose();
          else if (!ta && tb) GA.noalias() += G * B;
          else if (ta && !tb) GA.noalias() += B * G.transpose();
          else GA.noalias() += B.transpose() * G.transpose();
        }
        if (tape.requires_grad(ib)) {
          auto& gb = tape.grad_buffer(ib);
          auto GB = as_matrix(gb, gb.dim(0), gb.dim(1));
          if (!ta && !tb) GB.noalias() += A.transpose() * G;
          else if (ta && !tb) GB.noalias() += A * G;
          else if (!ta && tb) GB.noalias() += G.transpose() * A;
          else GB.noalias() += G.transpose() * A.transpose();
        }
      });
}

Var add(const Var& a, const Var& b) {
  require_same_tape("add", a, b);
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  Tensor out = a.value();
  out += b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b}, [ia, ib](Tape& tape, const Tensor& g) {
    tape.accumulate_grad(ia, g);
    tape.accumulate_grad(ib, g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape("mul", a, b);
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b}, [ia, ib](Tape& tape, const Tensor& g) {
    const auto& av = tape.value(ia);
    const auto& bv = tape.value(ib);
    if (tape.requires_grad(ia)) {
      auto& ga = tape.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.requires_grad(ib)) {
      auto& gb = tape.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  const auto ix = x.id();
  return x.tape().record("scale", std::move(out), {x}, [ix, factor](Tape& tape, const Tensor& g) {
    auto& gx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  const auto ix = x.id();
  return x.tape().record("relu", std::move(out), {x}, [ix](Tape& tape, const Tensor& g) {
    const auto& xv = tape.value(ix);
    auto& gx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape().record("reshape", std::move(out), {x}, [ix](Tape& tape, const Tensor& g) {
    auto& gx = tape.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const auto ix = x.id();
  return x.tape().record("sum", Tensor::scalar(s), {x}, [ix](Tape& tape, const Tensor& g) {
    auto& gx = tape.grad_buffer(ix);
    for (auto& v : gx.values()) v += g[0];
  });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  require_same_tape("add_channel_bias", x, bias);
  const auto& xv = x.value();
  if (bias.shape().size() != 1 || bias.shape()[0] != xv.dim(0)) {
    mismatch("add_channel_bias", xv.shape(), bias.shape());
  }
  const std::size_t c_n = xv.dim(0);
  const std::size_t inner = xv.size() / c_n;
  Tensor out = xv;
  const auto& bv = bias.value();
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] += bv[c];
  }
  const auto ix = x.id(), ib = bias.id();
  return x.tape().record("add_channel_bias", std::move(out), {x, bias},
      [ix, ib, c_n, inner](Tape& tape, const Tensor& g) {
        tape.accumulate_grad(ix, g);
        if (tape.requires_grad(ib)) {
          auto& gb = tape.grad_buffer(ib);
          for (std::size_t c = 0; c < c_n; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < inner; ++i) s += g[c * inner + i];
            gb[c] += s;
          }
        }
      });
}

Var depthwise_temporal_conv(const Var& x, const Var& kernel) {
  const char* op = "depthwise_temporal_conv";
  require_same_tape(op, x, kernel);
  require_rank(op, x, 3);
  require_rank(op, kernel, 2);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const std::size_t C = xv.dim(0), T = xv.dim(1), V = xv.dim(2), K = kv.dim(1);
  if (kv.dim(0) != C || K % 2 == 0) mismatch(op, xv.shape(), kv.shape());
  const long pad = static_cast<long>(K / 2);

  Tensor out(xv.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < K; ++s) {
      const double w = kv(c, s);
      const long shift = static_cast<long>(s) - pad;
      const long t0 = std::max(0L, -shift);
      const long t1 = std::min(static_cast<long>(T), static_cast<long>(T) - shift);
      for (long t = t0; t < t1; ++t) {
        const double* src = xv.data() + (c * T + static_cast<std::size_t>(t + shift)) * V;
        double* dst = &out(c, static_cast<std::size_t>(t), 0);
        for (std::size_t v = 0; v < V; ++v) dst[v] += w * src[v];
      }
    }
  }
  const auto ix = x.id(), ik = kernel.id();
  return x.tape().record(op, std::move(out), {x, kernel},
      [ix, ik, C, T, V, K, pad](Tape& tape, const Tensor& g) {
        const auto& xv = tape.value(ix);
        const auto& kv = tape.value(ik);
        const bool need_x = tape.requires_grad(ix), need_k = tape.requires_grad(ik);
        Tensor* gx = need_x ? &tape.grad_buffer(ix) : nullptr;
        Tensor* gk = need_k ? &tape.grad_buffer(ik) : nullptr;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t s = 0; s < K; ++s) {
            const long shift = static_cast<long>(s) - pad;
            const long t0 = std::max(0L, -shift);
            const long t1 = std::min(static_cast<long>(T), static_cast<long>(T) - shift);
            double acc = 0.0;
            for (long t = t0; t < t1; ++t) {
              const auto ts = static_cast<std::size_t>(t), tsrc = static_cast<std::size_t>(t + shift);
              const double* go = g.data() + (c * T + ts) * V;
              if (need_x) {
                double* dx = &(*gx)(c, tsrc, 0);
                for (std::size_t v = 0; v < V; ++v) dx[v] += kv(c, s) * go[v];
              }
              if (need_k) {
                const double* src = xv.data() + (c * T + tsrc) * V;
                for (std::size_t v = 0; v < V; ++v) acc += go[v] * src[v];
              }
            }
            if (need_k) (*gk)(c, s) += acc;
          }
        }
      });
}

Var temporal_conv(const Var& x, const Var& kernel) {
  const char* op = "temporal_conv";
  require_same_tape(op, x, kernel);
  require_rank(op, x, 3);
  require_rank(op, kernel, 3);
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  const std::size_t Cin = xv.dim(0), T = xv.dim(1), V = xv.dim(2);
  const std::size_t Cout = kv.dim(0), K = kv.dim(2);
  if (kv.dim(1) != Cin || K % 2 == 0) mismatch(op, xv.shape(), kv.shape());
  const long pad = static_cast<long>(K / 2);

  // Tap s of the kernel as a [Cout x Cin] matrix.
  auto tap = [Cout, Cin, K](const Tensor& kv, std::size_t s) {
    RowMat m(Cout, Cin);
    for (std::size_t o = 0; o < Cout; ++o)
      for (std::size_t i = 0; i < Cin; ++i) m(o, i) = kv(o, i, s);
    return m;
  };
  // Output frames [t0, t1) read input frames shifted by `shift`.
  auto range = [T](long shift) {
    const long t0 = std::max(0L, -shift);
    const long t1 = std::min(static_cast<long>(T), static_cast<long>(T) - shift);
    return std::pair<long, long>(t0, t1);
  };

  Tensor out({Cout, T, V});
  auto X = as_matrix(xv, Cin, T * V);
  auto Y = as_matrix(out, Cout, T * V);
  for (std::size_t s = 0; s < K; ++s) {
    const long shift = static_cast<long>(s) - pad;
    auto [t0, t1] = range(shift);
    if (t1 <= t0) continue;
    const auto cols = static_cast<Eigen::Index>((t1 - t0) * static_cast<long>(V));
    Y.middleCols(t0 * static_cast<long>(V), cols).noalias() +=
        tap(kv, s) * X.middleCols((t0 + shift) * static_cast<long>(V), cols);
  }
  const auto ix = x.id(), ik = kernel.id();
  return x.tape().record(op, std::move(out), {x, kernel},
      [ix, ik, Cin, Cout, T, V, K, pad, tap, range](Tape& tape, const Tensor& g) {
        const auto& xv = tape.value(ix);
        const auto& kv = tape.value(ik);
        auto X = as_matrix(xv, Cin, T * V);
        auto G = as_matrix(g, Cout, T * V);
        const bool need_x = tape.requires_grad(ix), need_k = tape.requires_grad(ik);
        for (std::size_t s = 0; s < K; ++s) {
          const long shift = static_cast<long>(s) - pad;
          auto [t0, t1] = range(shift);
          if (t1 <= t0) continue;
          const auto cols = static_cast<Eigen::Index>((t1 - t0) * static_cast<long>(V));
          const auto out_col = t0 * static_cast<long>(V);
          const auto in_col = (t0 + shift) * static_cast<long>(V);
          if (need_x) {
            auto& gx = tape.grad_buffer(ix);
            auto GX = as_matrix(gx, Cin, T * V);
            GX.middleCols(in_col, cols).noalias() +=
                tap(kv, s).transpose() * G.middleCols(out_col, cols);
          }
          if (need_k) {
            RowMat gtap = G.middleCols(out_col, cols) * X.middleCols(in_col, cols).transpose();
            auto& gk = tape.grad_buffer(ik);
            for (std::size_t o = 0; o < Cout; ++o)
              for (std::size_t i = 0; i < Cin; ++i) gk(o, i, s) += gtap(o, i);
          }
        }
      });
}

Var pointwise_conv(const Var& x, const Var& weight) {
  require_rank("pointwise_conv", x, 3);
  require_rank("pointwise_conv", weight, 2);
  const auto shape = x.shape();
  if (weight.shape()[0] != shape[0]) mismatch("pointwise_conv", shape, weight.shape());
  auto flat = reshape(x, {shape[0], shape[1] * shape[2]});
  auto y = matmul(weight, flat, /*transpose_a=*/true);
  return reshape(y, {weight.shape()[1], shape[1], shape[2]});
}

Var pointwise_conv(const Var& x, const Var& weight, const Var& bias) {
  return add_channel_bias(pointwise_conv(x, weight), bias);
}

namespace {

// Max over one axis of [C x T x V] broadcast back; `over_frames` selects the axis.
Var max_pool_broadcast(const Var& x, bool over_frames, const char* op) {
  require_rank(op, x, 3);
  const auto& xv = x.value();
  const std::size_t C = xv.dim(0), T = xv.dim(1), V = xv.dim(2);
  const std::size_t outer = over_frames ? V : T;
  const std::size_t len = over_frames ? T : V;
  auto index = [=](std::size_t c, std::size_t o, std::size_t i) {
    return over_frames ? (c * T + i) * V + o : (c * T + o) * V + i;
  };
  // argmax[c * outer + o] = position along the pooled axis (first maximum wins)
  std::vector<std::size_t> argmax(C * outer);
  Tensor out(xv.shape());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < len; ++i) {
        if (xv[index(c, o, i)] > xv[index(c, o, best)]) best = i;
      }
      argmax[c * outer + o] = best;
      const double m = xv[index(c, o, best)];
      for (std::size_t i = 0; i < len; ++i) out[index(c, o, i)] = m;
    }
  }
  const auto ix = x.id();
  return x.tape().record(op, std::move(out), {x},
      [ix, argmax = std::move(argmax), C, outer, len, index](Tape& tape, const Tensor& g) {
        auto& gx = tape.grad_buffer(ix);
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t o = 0; o < outer; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < len; ++i) s += g[index(c, o, i)];
            gx[index(c, o, argmax[c * outer + o])] += s;
          }
        }
      });
}

}  // namespace

Var max_pool_joints(const Var& x) { return max_pool_broadcast(x, false, "max_pool_joints"); }
Var max_pool_frames(const Var& x) { return max_pool_broadcast(x, true, "max_pool_frames"); }

Var global_avg_pool(const Var& x) {
  const auto& xv = x.value();
  const std::size_t C = xv.dim(0);
  const std::size_t inner = xv.size() / C;
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += xv[c * inner + i];
    out[c] = s / static_cast<double>(inner);
  }
  const auto ix = x.id();
  return x.tape().record("global_avg_pool", std::move(out), {x},
      [ix, C, inner](Tape& tape, const Tensor& g) {
        auto& gx = tape.grad_buffer(ix);
        const double w = 1.0 / static_cast<double>(inner);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < inner; ++i) gx[c * inner + i] += g[c] * w;
      });
}

namespace {

Var layer_norm_impl(const Var& x, const Var* gamma, const Var* beta, double eps) {
  const char* op = "layer_norm";
  const auto& xv = x.value();
  const std::size_t C = xv.dim(0);
  const std::size_t P = xv.size() / C;
  if (gamma && (gamma->shape() != Shape{C})) mismatch(op, xv.shape(), gamma->shape());
  if (beta && (beta->shape() != Shape{C})) mismatch(op, xv.shape(), beta->shape());

  Tensor xhat(xv.shape());
  std::vector<double> inv_std(P);
  for (std::size_t p = 0; p < P; ++p) {
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += xv[c * P + p];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = xv[c * P + p] - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) xhat[c * P + p] = (xv[c * P + p] - mean) * inv_std[p];
  }
  Tensor out = xhat;
  if (gamma) {
    const auto& gv = gamma->value();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[c * P + p] *= gv[c];
  }
  if (beta) {
    const auto& bv = beta->value();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[c * P + p] += bv[c];
  }

  std::vector<Var> parents{x};
  const std::size_t ig = gamma ? gamma->id() : SIZE_MAX;
  const std::size_t ib = beta ? beta->id() : SIZE_MAX;
  if (gamma) parents.push_back(*gamma);
  if (beta) parents.push_back(*beta);
  const auto ix = x.id();
  return x.tape().record(op, std::move(out), std::move(parents),
      [ix, ig, ib, C, P, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tape, const Tensor& g) {
        if (ig != SIZE_MAX && tape.requires_grad(ig)) {
          auto& gg = tape.grad_buffer(ig);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) gg[c] += g[c * P + p] * xhat[c * P + p];
        }
        if (ib != SIZE_MAX && tape.requires_grad(ib)) {
          auto& gb = tape.grad_buffer(ib);
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < P; ++p) gb[c] += g[c * P + p];
        }
        if (!tape.requires_grad(ix)) return;
        auto& gx = tape.grad_buffer(ix);
        const Tensor* gv = ig != SIZE_MAX ? &tape.value(ig) : nullptr;
        std::vector<double> dxhat(C);
        for (std::size_t p = 0; p < P; ++p) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            dxhat[c] = g[c * P + p] * (gv ? (*gv)[c] : 1.0);
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[c * P + p];
          }
          mean_d /= static_cast<double>(C);
          mean_dx /= static_cast<double>(C);
          for (std::size_t c = 0; c < C; ++c) {
            gx[c * P + p] += inv_std[p] * (dxhat[c] - mean_d - xhat[c * P + p] * mean_dx);
          }
        }
      });
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_same_tape("layer_norm", x, gamma);
  require_same_tape("layer_norm", x, beta);
  return layer_norm_impl(x, &gamma, &beta, eps);
}

Var layer_norm(const Var& x, double eps) { return layer_norm_impl(x, nullptr, nullptr, eps); }

Var dropout(const Var& x, double rate, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  auto& tape = x.tape();
  if (!training || rate == 0.0 || !tape.stochastic()) return x;
  std::mt19937_64 rng(tape.next_seed());
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv_keep = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (auto& m : mask.values()) m = keep(rng) ? inv_keep : 0.0;
  return mul(x, tape.constant(std::move(mask)));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_same_tape("concat", parts[0], p);
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) mismatch("concat", parts[0].shape(), p.shape());
    rows += p.shape()[0];
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor out(shape);
  std::vector<std::size_t> offsets, ids;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<long>(off));
    offsets.push_back(off);
    ids.push_back(p.id());
    off += v.size();
  }
  return parts[0].tape().record("concat", std::move(out), {parts.begin(), parts.end()},
      [offsets, ids](Tape& tape, const Tensor& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!tape.requires_grad(ids[k])) continue;
          auto& gx = tape.grad_buffer(ids[k]);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[offsets[k] + i];
        }
      });
}

Var softmax(const Var& x) {
  const auto& xv = x.value();
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.size() / n;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  const auto ix = x.id();
  Tensor probs = out;
  return x.tape().record("softmax", std::move(out), {x},
      [ix, n, rows, probs = std::move(probs)](Tape& tape, const Tensor& g) {
        auto& gx = tape.grad_buffer(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * probs[r * n + i];
          for (std::size_t i = 0; i < n; ++i)
            gx[r * n + i] += probs[r * n + i] * (g[r * n + i] - dot);
        }
      });
}

Var cross_entropy(const Var& probs, std::size_t label) {
  const auto& pv = probs.value();
  if (pv.rank() != 1 || label >= pv.size()) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     to_string(pv.shape()));
  }
  constexpr double kFloor = std::numeric_limits<double>::min();
  const double p = std::max(pv[label], kFloor);
  const auto ip = probs.id();
  return probs.tape().record("cross_entropy", Tensor::scalar(-std::log(p)), {probs},
      [ip, label, p](Tape& tape, const Tensor& g) {
        auto& gp = tape.grad_buffer(ip);
        gp[label] -= g[0] / p;
      });
}

Var softmax_cross_entropy(const Var& logits, std::size_t label) {
  const auto& lv = logits.value();
  if (lv.rank() != 1 || label >= lv.size()) {
    throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + to_string(lv.shape()));
  }
  const std::size_t n = lv.size();
  const double mx = *std::max_element(lv.values().begin(), lv.values().end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(lv[i] - mx);
  const double log_z = mx + std::log(z);
  Tensor probs({n});
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(lv[i] - log_z);
  const auto il = logits.id();
  return logits.tape().record("softmax_cross_entropy", Tensor::scalar(log_z - lv[label]), {logits},
      [il, label, probs = std::move(probs)](Tape& tape, const Tensor& g) {
        auto& gl = tape.grad_buffer(il);
        for (std::size_t i = 0; i < probs.size(); ++i)
          gl[i] += g[0] * (probs[i] - (i == label ? 1.0 : 0.0));
      });
}

}  // namespace tsgcn::ops
