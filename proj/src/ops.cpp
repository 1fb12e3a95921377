#include "dwd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace dwd::ad {

using detail::make_result;

namespace {

// Gradient buffer of parent i, or nullptr when that parent needs none.
double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

const std::vector<double>& pval(Node& self, std::size_t i) { return self.parents[i]->value; }

struct Broadcast {
  Shape out;
  std::vector<std::uint32_t> ia, ib;  // empty when shapes already match
};

Broadcast broadcast(const char* kind, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    return bc;
  }
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  bc.out.resize(r);
  for (std::size_t d = 0; d < r; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) throw ShapeError(kind, a, b);
    bc.out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(r), sb(r);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t d = r; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : acc_a;
    sb[d] = pb[d] == 1 ? 0 : acc_b;
    acc_a *= pa[d];
    acc_b *= pb[d];
  }
  const std::size_t n = numel(bc.out);
  bc.ia.resize(n);
  bc.ib.resize(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    bc.ia[k] = static_cast<std::uint32_t>(oa);
    bc.ib[k] = static_cast<std::uint32_t>(ob);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < bc.out[d]) {
        oa += sa[d];
        ob += sb[d];
        break;
      }
      oa -= sa[d] * (idx[d] - 1);
      ob -= sb[d] * (idx[d] - 1);
      idx[d] = 0;
    }
  }
  return bc;
}

enum class BinKind { kAdd, kSub, kMul };

Tensor binary(BinKind kind, const Tensor& a, const Tensor& b) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* name = names[static_cast<int>(kind)];
  auto bc = std::make_shared<Broadcast>(broadcast(name, a.shape(), b.shape()));
  const std::size_t n = numel(bc->out);
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();
  const bool same = bc->ia.empty();
  for (std::size_t k = 0; k < n; ++k) {
    double x = av[same ? k : bc->ia[k]];
    double y = bv[same ? k : bc->ib[k]];
    out[k] = kind == BinKind::kAdd ? x + y : kind == BinKind::kSub ? x - y : x * y;
  }
  return make_result(name, bc->out, std::move(out), {a, b}, [kind, bc](Node& self) {
    const bool same = bc->ia.empty();
    const std::size_t n = self.value.size();
    double* ga = pgrad(self, 0);
    double* gb = pgrad(self, 1);
    const auto& av = pval(self, 0);
    const auto& bv = pval(self, 1);
    for (std::size_t k = 0; k < n; ++k) {
      const double g = self.grad[k];
      const std::size_t i = same ? k : bc->ia[k];
      const std::size_t j = same ? k : bc->ib[k];
      switch (kind) {
        case BinKind::kAdd:
          if (ga) ga[i] += g;
          if (gb) gb[j] += g;
          break;
        case BinKind::kSub:
          if (ga) ga[i] += g;
          if (gb) gb[j] -= g;
          break;
        case BinKind::kMul:
          if (ga) ga[i] += g * bv[j];
          if (gb) gb[j] += g * av[i];
          break;
      }
    }
  });
}

template <class F, class D>
Tensor unary(const char* kind, const Tensor& a, F f, D dfdx_from_xy) {
  std::vector<double> out(a.size());
  const auto& av = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k]);
  return make_result(kind, a.shape(), std::move(out), {a}, [dfdx_from_xy](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    const auto& x = pval(self, 0);
    for (std::size_t k = 0; k < self.value.size(); ++k) {
      ga[k] += self.grad[k] * dfdx_from_xy(x[k], self.value[k]);
    }
  });
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const char* kind, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(kind, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit as;
  for (std::size_t d = 0; d < axis; ++d) as.outer *= s[d];
  as.len = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) as.inner *= s[d];
  return as;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = A[i * k + p];
      if (x == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = pval(self, 0).data();
    const double* B = pval(self, 1).data();
    if (double* ga = pgrad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          const double* grow = G + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = pgrad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = A[i * k + p];
          if (x == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose", "expects rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinKind::kMul, a, b); }

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a, double floor) {
  return unary(
      "log", a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax", "expects rank >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  const auto& av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [rows, n](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("log_softmax", "expects rank >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  const auto& av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a}, [rows, n](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const auto as = split_axis("sum", a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(as.outer * as.inner, 0.0);
  const auto& av = a.data();
  for (std::size_t o = 0; o < as.outer; ++o)
    for (std::size_t l = 0; l < as.len; ++l)
      for (std::size_t i = 0; i < as.inner; ++i)
        out[o * as.inner + i] += av[(o * as.len + l) * as.inner + i];
  return make_result("sum", std::move(shape), std::move(out), {a}, [as](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t o = 0; o < as.outer; ++o)
      for (std::size_t l = 0; l < as.len; ++l)
        for (std::size_t i = 0; i < as.inner; ++i)
          ga[(o * as.len + l) * as.inner + i] += self.grad[o * as.inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto as = split_axis("mean", a.shape(), axis);
  return scale(sum(a, axis), 1.0 / static_cast<double>(as.len));
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_result("sum_all", {}, {s}, {a}, [](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    for (std::size_t k = 0; k < self.parents[0]->value.size(); ++k) ga[k] += g;
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all", "empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat", "axis out of range for " + shape_str(s0));
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) throw ShapeError("concat", s0, s);
    lens.push_back(s[axis]);
    total += s[axis];
  }
  const auto as = split_axis("concat", s0, axis);
  Shape shape = s0;
  shape[axis] = total;
  std::vector<double> out(as.outer * total * as.inner);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto& pv = parts[q].data();
    const std::size_t chunk = lens[q] * as.inner;
    for (std::size_t o = 0; o < as.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * total * as.inner + offset);
    }
    offset += chunk;
  }
  return make_result("concat", std::move(shape), std::move(out), parts,
                     [as, total, lens](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t q = 0; q < lens.size(); ++q) {
                         const std::size_t chunk = lens[q] * as.inner;
                         if (double* g = pgrad(self, q)) {
                           for (std::size_t o = 0; o < as.outer; ++o) {
                             const double* src = self.grad.data() + o * total * as.inner + offset;
                             for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                           }
                         }
                         offset += chunk;
                       }
                     });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto as = split_axis("narrow", a.shape(), axis);
  if (start + length > as.len) {
    throw ShapeError("narrow", "range [" + std::to_string(start) + "," +
                                   std::to_string(start + length) + ") exceeds " +
                                   shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  std::vector<double> out(as.outer * length * as.inner);
  const auto& av = a.data();
  for (std::size_t o = 0; o < as.outer; ++o)
    std::copy_n(av.data() + (o * as.len + start) * as.inner, length * as.inner,
                out.data() + o * length * as.inner);
  return make_result("narrow", std::move(shape), std::move(out), {a},
                     [as, start, length](Node& self) {
                       double* ga = pgrad(self, 0);
                       if (!ga) return;
                       for (std::size_t o = 0; o < as.outer; ++o)
                         for (std::size_t i = 0; i < length * as.inner; ++i)
                           ga[(o * as.len + start) * as.inner + i] +=
                               self.grad[o * length * as.inner + i];
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) throw ShapeError("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t k = 0; k < self.value.size(); ++k) ga[k] += self.grad[k];
  });
}

Tensor index_select(const Tensor& table, const std::vector<std::size_t>& rows) {
  if (table.rank() == 0) throw ShapeError("index_select", "table must have rank >= 1");
  const std::size_t nrows = table.dim(0);
  const std::size_t width = nrows ? table.size() / nrows : 0;
  for (auto r : rows) {
    if (r >= nrows) {
      throw ShapeError("index_select", "row " + std::to_string(r) + " out of range for " +
                                           shape_str(table.shape()));
    }
  }
  Shape shape = table.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  const auto& tv = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(tv.data() + rows[i] * width, width, out.data() + i * width);
  return make_result("index_select", std::move(shape), std::move(out), {table},
                     [rows, width](Node& self) {
                       double* gt = pgrad(self, 0);
                       if (!gt) return;
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t j = 0; j < width; ++j)
                           gt[rows[i] * width + j] += self.grad[i * width + j];
                     });
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& cols) {
  if (a.rank() != 2 || cols.size() != a.dim(0)) {
    throw ShapeError("pick", a.shape(), Shape{cols.size()});
  }
  const std::size_t n = a.dim(1);
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= n) throw ShapeError("pick", "column index out of range");
    out[i] = a.data()[i * n + cols[i]];
  }
  return make_result("pick", {cols.size()}, std::move(out), {a}, [cols, n](Node& self) {
    double* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < cols.size(); ++i) ga[i * n + cols[i]] += self.grad[i];
  });
}

Tensor dropout(const Tensor& a, double rate, RngStream& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ShapeError("dropout", "rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.bernoulli(1.0 - rate) ? keep_scale : 0.0;
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.data()[k] * mask[k];
  return make_result("dropout", a.shape(), std::move(out), {a},
                     [mask = std::move(mask)](Node& self) {
                       double* ga = pgrad(self, 0);
                       if (!ga) return;
                       for (std::size_t k = 0; k < mask.size(); ++k) ga[k] += self.grad[k] * mask[k];
                     });
}

Tensor wn_linear(const Tensor& x, const Tensor& direction, const Tensor& magnitude,
                 const Tensor& bias) {
  if (x.rank() != 2 || direction.rank() != 2 || x.dim(1) != direction.dim(1)) {
    throw ShapeError("wn_linear", x.shape(), direction.shape());
  }
  const std::size_t m = x.dim(0), in = x.dim(1), out_dim = direction.dim(0);
  if (magnitude.shape() != Shape{out_dim} || bias.shape() != Shape{out_dim}) {
    throw ShapeError("wn_linear", magnitude.shape(), bias.shape());
  }
  const double* V = direction.data().data();
  std::vector<double> norms(out_dim);
  std::vector<double> W(out_dim * in);
  for (std::size_t o = 0; o < out_dim; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < in; ++i) s += V[o * in + i] * V[o * in + i];
    norms[o] = std::sqrt(std::max(s, 1e-24));
    const double c = magnitude.data()[o] / norms[o];
    for (std::size_t i = 0; i < in; ++i) W[o * in + i] = c * V[o * in + i];
  }
  std::vector<double> out(m * out_dim);
  const double* X = x.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = bias.data()[o];
      const double* xr = X + r * in;
      const double* wr = W.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      out[r * out_dim + o] = s;
    }
  }
  return make_result(
      "wn_linear", {m, out_dim}, std::move(out), {x, direction, magnitude, bias},
      [m, in, out_dim, norms = std::move(norms), W = std::move(W)](Node& self) {
        const double* G = self.grad.data();
        const double* X = pval(self, 0).data();
        const double* V = pval(self, 1).data();
        const double* gmag = pval(self, 2).data();
        if (double* gx = pgrad(self, 0)) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double g = G[r * out_dim + o];
              if (g == 0.0) continue;
              for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += g * W[o * in + i];
            }
        }
        if (double* gb = pgrad(self, 3)) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G[r * out_dim + o];
        }
        double* gv = pgrad(self, 1);
        double* gg = pgrad(self, 2);
        if (!gv && !gg) return;
        std::vector<double> gW(out_dim * in, 0.0);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = G[r * out_dim + o];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += g * X[r * in + i];
          }
        for (std::size_t o = 0; o < out_dim; ++o) {
          double dot = 0.0;
          for (std::size_t i = 0; i < in; ++i) dot += gW[o * in + i] * V[o * in + i];
          const double n = norms[o];
          if (gg) gg[o] += dot / n;
          if (gv) {
            const double c = gmag[o] / n;
            for (std::size_t i = 0; i < in; ++i)
              gv[o * in + i] += c * (gW[o * in + i] - dot * V[o * in + i] / (n * n));
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace dwd::ad
