#pragma once

// Central finite differences against the tape's analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dwd/ops.hpp"
#include "dwd/rng.hpp"
#include "dwd/stochastic.hpp"

namespace fd {

using dwd::ad::Tensor;
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

inline double rel_error(double a, double n) {
  const double scale = std::max(std::abs(a), std::abs(n));
  if (scale < 1e-7) return std::abs(a - n);  // both essentially zero
  return std::abs(a - n) / scale;
}

/// Largest relative error over every element of every input.
inline double max_rel_error(const Fn& f, std::vector<Tensor> inputs, double eps = 1e-4) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    dwd::ad::Tape tape;
    dwd::ad::Tape::Scope scope(tape);
    Tensor loss = f(inputs);
    dwd::ad::backward(tape, loss);
  }
  double worst = 0.0;
  dwd::ad::Tape::Pause pause;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto data = t.mutable_data();
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double keep = data[j];
      data[j] = keep + eps;
      const double up = f(inputs).item();
      data[j] = keep - eps;
      const double down = f(inputs).item();
      data[j] = keep;
      worst = std::max(worst, rel_error(analytic[j], (up - down) / (2 * eps)));
    }
  }
  return worst;
}

/// Uniform values in [lo, hi] with |v| >= gap (keeps relu away from its kink).
inline Tensor random_tensor(dwd::ad::Shape shape, dwd::RngStream& rng, double lo = -1.0,
                            double hi = 1.0, double gap = 0.0) {
  std::vector<double> v(dwd::ad::numel(shape));
  for (auto& x : v) {
    do {
      x = lo + (hi - lo) * rng.uniform();
    } while (std::abs(x) < gap);
  }
  return Tensor::from(std::move(shape), std::move(v));
}

/// Weighted sum so every output element gets a distinct upstream gradient.
inline Tensor probe(const Tensor& out, std::uint64_t salt) {
  dwd::RngStream r(salt, "fd/probe");
  std::vector<double> w(out.size());
  for (auto& x : w) x = -1.0 + 2.0 * r.uniform();
  return dwd::ad::sum_all(dwd::ad::mul(out, Tensor::from(out.shape(), std::move(w))));
}

struct OpCase {
  std::string name;
  std::function<std::pair<Fn, std::vector<Tensor>>(dwd::RngStream&)> make;
};

/// Every differentiable op, each with a random-instance generator.
inline std::vector<OpCase> op_cases() {
  namespace ad = dwd::ad;
  std::vector<OpCase> cases;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, double lo, double hi,
                   double gap = 0.0) {
    cases.push_back({name, [=](dwd::RngStream& rng) {
                       return std::pair<Fn, std::vector<Tensor>>{
                           [=](const std::vector<Tensor>& x) { return probe(op(x[0]), 11); },
                           {random_tensor({3, 4}, rng, lo, hi, gap)}};
                     }});
  };
  unary("relu", [](const Tensor& a) { return ad::relu(a); }, -1, 1, 0.05);
  unary("tanh", [](const Tensor& a) { return ad::tanh(a); }, -2, 2);
  unary("sigmoid", [](const Tensor& a) { return ad::sigmoid(a); }, -3, 3);
  unary("exp", [](const Tensor& a) { return ad::exp(a); }, -1, 1);
  unary("log", [](const Tensor& a) { return ad::log(a); }, 0.2, 2);
  unary("square", [](const Tensor& a) { return ad::square(a); }, -2, 2);
  unary("neg", [](const Tensor& a) { return ad::neg(a); }, -1, 1);
  unary("scale", [](const Tensor& a) { return ad::scale(a, -2.5); }, -1, 1);
  unary("add_scalar", [](const Tensor& a) { return ad::add_scalar(a, 0.7); }, -1, 1);
  unary("softmax", [](const Tensor& a) { return ad::softmax(a); }, -2, 2);
  unary("log_softmax", [](const Tensor& a) { return ad::log_softmax(a); }, -2, 2);
  unary("sum_axis0", [](const Tensor& a) { return ad::sum(a, 0); }, -1, 1);
  unary("sum_axis1", [](const Tensor& a) { return ad::sum(a, 1); }, -1, 1);
  unary("mean_axis0", [](const Tensor& a) { return ad::mean(a, 0); }, -1, 1);
  unary("mean_axis1", [](const Tensor& a) { return ad::mean(a, 1); }, -1, 1);
  unary("sum_all", [](const Tensor& a) { return ad::reshape(ad::sum_all(a), {1}); }, -1, 1);
  unary("mean_all", [](const Tensor& a) { return ad::reshape(ad::mean_all(a), {1}); }, -1, 1);
  unary("transpose", [](const Tensor& a) { return ad::transpose(a); }, -1, 1);
  unary("narrow", [](const Tensor& a) { return ad::narrow(a, 1, 1, 2); }, -1, 1);
  unary("reshape", [](const Tensor& a) { return ad::reshape(a, {2, 6}); }, -1, 1);
  unary("index_select", [](const Tensor& a) { return ad::index_select(a, {2, 0, 2, 1}); }, -1, 1);
  unary("pick", [](const Tensor& a) { return ad::pick(a, {3, 0, 2}); }, -1, 1);
  unary("dropout", [](const Tensor& a) {
    dwd::RngStream r(5, "fd/dropout");  // same mask on every evaluation
    return ad::dropout(a, 0.3, r, true);
  }, -1, 1);
  unary("kl_categorical_uniform",
        [](const Tensor& a) { return dwd::stoch::kl_categorical_uniform(ad::log_softmax(a)); }, -2, 2);

  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op,
                    ad::Shape sa, ad::Shape sb) {
    cases.push_back({name, [=](dwd::RngStream& rng) {
                       return std::pair<Fn, std::vector<Tensor>>{
                           [=](const std::vector<Tensor>& x) { return probe(op(x[0], x[1]), 13); },
                           {random_tensor(sa, rng), random_tensor(sb, rng)}};
                     }});
  };
  binary("matmul", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); }, {3, 4}, {4, 2});
  binary("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); }, {3, 4}, {3, 4});
  binary("add_broadcast", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); }, {3, 4}, {4});
  binary("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); }, {3, 4}, {3, 1});
  binary("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); }, {3, 4}, {3, 4});
  binary("mul_broadcast", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); }, {3, 4}, {1, 4});
  binary("concat_axis0", [](const Tensor& a, const Tensor& b) { return ad::concat({a, b}, 0); }, {2, 3}, {1, 3});
  binary("concat_axis1", [](const Tensor& a, const Tensor& b) { return ad::concat({a, b, a}, 1); }, {2, 3}, {2, 2});

  cases.push_back({"linear", [](dwd::RngStream& rng) {
                     return std::pair<Fn, std::vector<Tensor>>{
                         [](const std::vector<Tensor>& x) { return probe(ad::linear(x[0], x[1], x[2]), 17); },
                         {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)}};
                   }});
  cases.push_back({"wn_linear", [](dwd::RngStream& rng) {
                     return std::pair<Fn, std::vector<Tensor>>{
                         [](const std::vector<Tensor>& x) {
                           return probe(ad::wn_linear(x[0], x[1], x[2], x[3]), 19);
                         },
                         {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng, -1, 1, 0.1),
                          random_tensor({5}, rng, 0.5, 1.5), random_tensor({5}, rng)}};
                   }});
  cases.push_back({"gumbel_softmax", [](dwd::RngStream& rng) {
                     auto noise = dwd::stoch::gumbel_noise({3, 4}, rng);
                     return std::pair<Fn, std::vector<Tensor>>{
                         [noise](const std::vector<Tensor>& x) {
                           return probe(dwd::stoch::gumbel_softmax_with_noise(x[0], noise, 0.8).soft, 23);
                         },
                         {random_tensor({3, 4}, rng, -2, 2)}};
                   }});
  cases.push_back({"mlp3", [](dwd::RngStream& rng) {
                     return std::pair<Fn, std::vector<Tensor>>{
                         [](const std::vector<Tensor>& x) {
                           auto h = ad::tanh(ad::linear(x[0], x[1], x[2]));
                           h = ad::sigmoid(ad::linear(h, x[3], x[4]));
                           auto out = ad::log_softmax(ad::linear(h, x[5], x[6]));
                           return ad::neg(ad::sum_all(ad::pick(out, {0, 2, 1})));
                         },
                         {random_tensor({3, 4}, rng), random_tensor({4, 6}, rng), random_tensor({6}, rng),
                          random_tensor({6, 5}, rng), random_tensor({5}, rng), random_tensor({5, 3}, rng),
                          random_tensor({3}, rng)}};
                   }});
  return cases;
}

}  // namespace fd
