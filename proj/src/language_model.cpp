#include "dwd/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dwd::eval {

using ad::Tensor;

namespace {
void check_tokens(const world::Question& q) {
  if (q.tokens.empty() || q.tokens.back() != world::kEnd)
    throw std::invalid_argument("language model: question must end with the end token");
  for (auto t : q.tokens)
    if (t >= world::kQuestionVocabSize) throw std::invalid_argument("language model: token out of range");
}
}  // namespace

LanguageModel LanguageModel::train(const std::vector<world::Question>& corpus, const LmConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train_metric_lm: empty corpus");
  for (const auto& q : corpus) check_tokens(q);
  LanguageModel lm;
  RngStream init(cfg.seed, "lm/init");
  nn::Binder b(lm.store_, &init, "lm.");
  lm.emb_ = nn::Embedding::bind(b.sub("words"), world::kQuestionVocabSize, cfg.embed);
  lm.rnn_ = nn::LSTMCell::bind(b.sub("rnn"), cfg.embed, cfg.hidden);
  lm.out_ = nn::Linear::bind(b.sub("out"), cfg.hidden, world::kQuestionVocabSize);

  RngStream shuffle(cfg.seed, "lm/shuffle");
  ad::ParamStore::AdamConfig adam;
  adam.lr = cfg.lr;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double total = 0.0, tokens = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      std::vector<const world::Question*> batch;
      double ntok = 0.0;
      for (std::size_t j = s; j < std::min(order.size(), s + cfg.batch); ++j) {
        batch.push_back(&corpus[order[j]]);
        ntok += static_cast<double>(corpus[order[j]].tokens.size());
      }
      ad::Tape tape;
      Tensor loss;
      {
        ad::Tape::Scope scope(tape);
        loss = ad::scale(ad::neg(ad::sum_all(lm.batch_loglik(batch))), 1.0 / ntok);
      }
      ad::backward(tape, loss);
      lm.store_.clip_grad_norm(5.0, {});
      lm.store_.adam_step(adam, {});
      total += loss.item() * ntok;
      tokens += ntok;
    }
    lm.final_loss_ = total / tokens;
  }
  return lm;
}

Tensor LanguageModel::batch_loglik(const std::vector<const world::Question*>& qs) const {
  const std::size_t G = qs.size();
  std::size_t steps = 0;
  for (const auto* q : qs) steps = std::max(steps, q->tokens.size());
  nn::LSTMState st{Tensor::zeros({G, rnn_.hidden}), Tensor::zeros({G, rnn_.hidden})};
  std::vector<std::size_t> prev(G, world::kPad);
  Tensor total;
  for (std::size_t t = 0; t < steps; ++t) {
    st = rnn_.step(emb_(prev), st);
    Tensor lp = ad::log_softmax(out_(st.h));
    std::vector<std::size_t> tgt(G, world::kPad);
    std::vector<double> m(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      if (t < qs[g]->tokens.size()) {
        tgt[g] = qs[g]->tokens[t];
        m[g] = 1.0;
      }
    }
    Tensor picked = ad::mul(ad::pick(lp, tgt), Tensor::from({G}, m));
    total = total.defined() ? ad::add(total, picked) : picked;
    prev = tgt;
  }
  return total;
}

std::vector<double> LanguageModel::question_nll(const std::vector<world::Question>& questions) const {
  ad::Tape::Pause inference;
  std::vector<double> out;
  out.reserve(questions.size());
  for (std::size_t s = 0; s < questions.size(); s += 256) {
    std::vector<const world::Question*> batch;
    for (std::size_t j = s; j < std::min(questions.size(), s + 256); ++j) {
      check_tokens(questions[j]);
      batch.push_back(&questions[j]);
    }
    Tensor ll = batch_loglik(batch);
    for (double v : ll.data()) out.push_back(-v);
  }
  return out;
}

double LanguageModel::perplexity(const std::vector<world::Question>& questions) const {
  if (questions.empty()) throw std::invalid_argument("perplexity: no questions");
  auto nll = question_nll(questions);
  // Summing in sorted order makes the result independent of question order.
  std::sort(nll.begin(), nll.end());
  double total = 0.0, tokens = 0.0;
  for (double v : nll) total += v;
  for (const auto& q : questions) tokens += static_cast<double>(q.tokens.size());
  return std::exp(total / tokens);
}

}  // namespace dwd::eval
