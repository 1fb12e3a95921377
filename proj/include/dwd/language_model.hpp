#pragma once

#include <cstdint>
#include <vector>

#include "dwd/layers.hpp"
#include "dwd/world.hpp"

namespace dwd::eval {

struct LmConfig {
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 3e-3;
  std::uint64_t seed = 7;
};

/// Recurrent token LM over questions, used only as a fluency yardstick.
class LanguageModel {
 public:
  static LanguageModel train(const std::vector<world::Question>& corpus, const LmConfig& cfg = {});

  LanguageModel(LanguageModel&&) = default;
  LanguageModel& operator=(LanguageModel&&) = default;

  /// exp of the mean per-token negative log-likelihood, end token included.
  double perplexity(const std::vector<world::Question>& questions) const;
  /// Negative log-likelihood of each question (summed over its tokens).
  std::vector<double> question_nll(const std::vector<world::Question>& questions) const;
  double final_train_loss() const { return final_loss_; }

 private:
  LanguageModel() = default;
  ad::Tensor batch_loglik(const std::vector<const world::Question*>& qs) const;  // [G]

  ad::ParamStore store_;
  nn::Embedding emb_;
  nn::LSTMCell rnn_;
  nn::Linear out_;
  double final_loss_ = 0.0;
};

}  // namespace dwd::eval
