#include "dwd/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dwd/ops.hpp"

namespace dwd::stoch {

namespace {
constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)
}

ad::Tensor gumbel_noise(const ad::Shape& shape, RngStream& rng) {
  std::vector<double> g(ad::numel(shape));
  for (auto& x : g) x = -std::log(-std::log(rng.uniform()));
  return ad::Tensor::from(shape, std::move(g));
}

ConcreteSample gumbel_softmax_with_noise(const ad::Tensor& logits, const ad::Tensor& noise,
                                         double temperature) {
  if (logits.rank() == 0 || logits.rank() > 2) {
    throw ad::ShapeError("gumbel_softmax", "expects rank 1 or 2, got " + ad::shape_str(logits.shape()));
  }
  if (logits.shape().back() < 2) throw ad::ShapeError("gumbel_softmax", "needs K >= 2");
  if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
  for (double x : logits.data()) {
    if (!std::isfinite(x)) throw std::invalid_argument("gumbel_softmax: non-finite logits");
  }
  ConcreteSample s;
  s.temperature = temperature;
  s.soft = ad::softmax(ad::scale(ad::add(logits, noise), 1.0 / temperature));
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  for (std::size_t r = 0; r < rows; ++r) {
    s.hard_index.push_back(argmax(s.soft.data().subspan(r * k, k)));
  }
  return s;
}

ConcreteSample gumbel_softmax(const ad::Tensor& logits, double temperature, RngStream& rng) {
  return gumbel_softmax_with_noise(logits, gumbel_noise(logits.shape(), rng), temperature);
}

ad::Tensor kl_categorical_uniform(const ad::Tensor& log_probs) {
  if (log_probs.rank() == 0 || log_probs.rank() > 2) {
    throw ad::ShapeError("kl_categorical_uniform",
                         "expects rank 1 or 2, got " + ad::shape_str(log_probs.shape()));
  }
  const std::size_t k = log_probs.shape().back();
  const std::size_t rows = log_probs.size() / k;
  const double log_k = std::log(static_cast<double>(k));
  const auto lp = log_probs.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double q = std::exp(lp[r * k + j]);
      total += q;
      kl += q * (std::max(lp[r * k + j], kLogFloor) + log_k);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::invalid_argument("kl_categorical_uniform: probabilities sum to " +
                                  std::to_string(total));
    }
    out[r] = kl;
  }
  ad::Shape shape = log_probs.rank() == 1 ? ad::Shape{} : ad::Shape{rows};
  return ad::detail::make_result(
      "kl_categorical_uniform", std::move(shape), std::move(out), {log_probs},
      [rows, k, log_k](ad::Node& self) {
        ad::Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        double* g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            const double l = p.value[r * k + j];
            const double q = std::exp(l);
            const double d = l > kLogFloor ? q * (l + log_k) + q : q * (kLogFloor + log_k);
            g[r * k + j] += self.grad[r] * d;
          }
        }
      });
}

std::size_t sample_categorical(std::span<const double> probs, RngStream& rng) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("sample_categorical: invalid probability");
    total += p;
  }
  if (probs.empty() || std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("sample_categorical: probabilities sum to " + std::to_string(total));
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc && probs[i] > 0.0) return i;
  }
  return last_positive;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double annealed_temperature(double start, double end, std::size_t step, std::size_t steps) {
  if (steps == 0 || step >= steps) return end;
  const double f = static_cast<double>(step) / static_cast<double>(steps);
  return start + (end - start) * f;
}

}  // namespace dwd::stoch
