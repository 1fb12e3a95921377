#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dwd/ops.hpp"
#include "dwd/param_store.hpp"
#include "dwd/rng.hpp"

// Parameterized building blocks. Each layer is a set of tensor handles bound
// to entries of a ParamStore, so optimizer updates are visible immediately.
namespace dwd::nn {

using ad::Tensor;

/// Binds layers either by creating parameters (when an init stream is
/// given) or by looking up existing ones with a shape check.
class Binder {
 public:
  Binder(ad::ParamStore& store, RngStream* init, std::string prefix = "")
      : store_(&store), init_(init), prefix_(std::move(prefix)) {}

  Binder sub(const std::string& name) const { return Binder(*store_, init_, prefix_ + name + "."); }
  Tensor param(const std::string& name, const ad::Shape& shape, double bound);
  Tensor constant(const std::string& name, const ad::Shape& shape, double value);
  bool initializing() const { return init_ != nullptr; }
  const std::string& prefix() const { return prefix_; }

 private:
  ad::ParamStore* store_;
  RngStream* init_;
  std::string prefix_;
};

/// x * W + b with W [in, out].
struct Linear {
  Tensor weight, bias;
  static Linear bind(Binder b, std::size_t in, std::size_t out, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

/// Weight-normalized linear map (direction/magnitude per output row).
struct WNLinear {
  Tensor direction, magnitude, bias;
  static WNLinear bind(Binder b, std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& x) const {
    return ad::wn_linear(x, direction, magnitude, bias);
  }
};

/// Two weight-normalized layers with ReLU after each; optional dropout on
/// the hidden activation.
struct WNMlp {
  WNLinear first, second;
  bool relu_out = true;
  static WNMlp bind(Binder b, std::size_t in, std::size_t hidden, std::size_t out, bool relu_out);
  Tensor operator()(const Tensor& x, double dropout_rate = 0.0, RngStream* rng = nullptr,
                    bool training = false) const;
};

struct Embedding {
  Tensor table;  // [rows, dim]
  static Embedding bind(Binder b, std::size_t rows, std::size_t dim);
  Tensor operator()(const std::vector<std::size_t>& ids) const { return ad::index_select(table, ids); }
  /// Soft lookup: probs [n, rows] times table.
  Tensor soft(const Tensor& probs) const { return ad::matmul(probs, table); }
};

struct LSTMState {
  Tensor h, c;
};

/// Standard LSTM cell; gate order i, f, g, o.
struct LSTMCell {
  Tensor w_input, w_hidden, bias;
  std::size_t hidden = 0;
  static LSTMCell bind(Binder b, std::size_t in, std::size_t hidden);
  LSTMState step(const Tensor& x, const LSTMState& prev) const;
};

}  // namespace dwd::nn
