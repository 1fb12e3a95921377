#include "dwd/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dwd::nn {

Tensor Binder::param(const std::string& name, const ad::Shape& shape, double bound) {
  const std::string full = prefix_ + name;
  if (init_) return store_->create(full, shape, bound, *init_);
  const Tensor& t = store_->get(full);
  if (t.shape() != shape) throw ad::ShapeError("bind " + full, t.shape(), shape);
  return t;
}

Tensor Binder::constant(const std::string& name, const ad::Shape& shape, double value) {
  const std::string full = prefix_ + name;
  if (init_) return store_->create_constant(full, shape, value);
  const Tensor& t = store_->get(full);
  if (t.shape() != shape) throw ad::ShapeError("bind " + full, t.shape(), shape);
  return t;
}

namespace {
double fan_in_bound(std::size_t in) { return 1.0 / std::sqrt(static_cast<double>(in)); }
}  // namespace

Linear Linear::bind(Binder b, std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = b.param("w", {in, out}, fan_in_bound(in));
  if (with_bias) l.bias = b.param("b", {out}, fan_in_bound(in));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ad::matmul(x, weight);
  return bias.defined() ? ad::add(y, bias) : y;
}

WNLinear WNLinear::bind(Binder b, std::size_t in, std::size_t out) {
  WNLinear l;
  l.direction = b.param("v", {out, in}, fan_in_bound(in));
  if (b.initializing()) {
    // Start with W == direction: magnitude equals each row's norm.
    std::vector<double> norms(out);
    const auto v = l.direction.data();
    for (std::size_t o = 0; o < out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += v[o * in + i] * v[o * in + i];
      norms[o] = std::sqrt(s);
    }
    l.magnitude = b.constant("g", {out}, 0.0);
    auto m = l.magnitude.mutable_data();
    for (std::size_t o = 0; o < out; ++o) m[o] = norms[o];
  } else {
    l.magnitude = b.constant("g", {out}, 0.0);
  }
  l.bias = b.param("b", {out}, fan_in_bound(in));
  return l;
}

WNMlp WNMlp::bind(Binder b, std::size_t in, std::size_t hidden, std::size_t out, bool relu_out) {
  WNMlp m;
  m.first = WNLinear::bind(b.sub("l1"), in, hidden);
  m.second = WNLinear::bind(b.sub("l2"), hidden, out);
  m.relu_out = relu_out;
  return m;
}

Tensor WNMlp::operator()(const Tensor& x, double dropout_rate, RngStream* rng, bool training) const {
  Tensor hid = ad::relu(first(x));
  if (training && dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("WNMlp: dropout needs an rng stream");
    hid = ad::dropout(hid, dropout_rate, *rng, true);
  }
  Tensor y = second(hid);
  return relu_out ? ad::relu(y) : y;
}

Embedding Embedding::bind(Binder b, std::size_t rows, std::size_t dim) {
  Embedding e;
  e.table = b.param("table", {rows, dim}, 0.5);
  return e;
}

LSTMCell LSTMCell::bind(Binder b, std::size_t in, std::size_t hidden) {
  LSTMCell c;
  c.hidden = hidden;
  c.w_input = b.param("wx", {in, 4 * hidden}, fan_in_bound(hidden));
  c.w_hidden = b.param("wh", {hidden, 4 * hidden}, fan_in_bound(hidden));
  c.bias = b.param("b", {4 * hidden}, fan_in_bound(hidden));
  return c;
}

LSTMState LSTMCell::step(const Tensor& x, const LSTMState& prev) const {
  Tensor gates = ad::add(ad::add(ad::matmul(x, w_input), ad::matmul(prev.h, w_hidden)), bias);
  Tensor i = ad::sigmoid(ad::narrow(gates, 1, 0, hidden));
  Tensor f = ad::sigmoid(ad::narrow(gates, 1, hidden, hidden));
  Tensor g = ad::tanh(ad::narrow(gates, 1, 2 * hidden, hidden));
  Tensor o = ad::sigmoid(ad::narrow(gates, 1, 3 * hidden, hidden));
  Tensor c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  Tensor h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

}  // namespace dwd::nn
