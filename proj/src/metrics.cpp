#include "dwd/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "dwd/stochastic.hpp"

namespace dwd::eval {

double accuracy(const std::vector<game::Transcript>& transcripts) {
  if (transcripts.empty()) throw std::invalid_argument("accuracy: no transcripts");
  std::size_t hits = 0;
  for (const auto& t : transcripts) hits += t.correct() ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(transcripts.size());
}

double relevance(const std::vector<game::Transcript>& transcripts) {
  if (transcripts.empty()) throw std::invalid_argument("relevance: no transcripts");
  double sum = 0.0;
  std::size_t rounds = 0;
  for (const auto& t : transcripts) {
    for (const auto& r : t.rounds) {
      std::uint8_t best = 0;
      for (auto v : r.relevance) best = std::max(best, v);
      sum += best;
      ++rounds;
    }
  }
  if (rounds == 0) throw std::invalid_argument("relevance: transcripts have no rounds");
  return sum / static_cast<double>(rounds);
}

std::vector<double> accuracy_by_round(const std::vector<game::Transcript>& transcripts) {
  if (transcripts.empty()) throw std::invalid_argument("accuracy_by_round: no transcripts");
  const std::size_t R = transcripts.front().rounds.size();
  std::vector<double> acc(R, 0.0);
  for (const auto& t : transcripts) {
    if (t.rounds.size() != R) throw std::invalid_argument("accuracy_by_round: mixed round counts");
    for (std::size_t r = 0; r < R; ++r)
      if (stoch::argmax(t.rounds[r].guess) == t.pool.target_index) acc[r] += 1.0;
  }
  for (auto& a : acc) a /= static_cast<double>(transcripts.size());
  return acc;
}

std::vector<std::vector<std::size_t>> ngrams(const world::Question& q, std::size_t n) {
  std::vector<std::size_t> words;
  for (auto t : q.tokens) {
    if (t == world::kEnd) break;
    if (t != world::kPad) words.push_back(t);
  }
  std::vector<std::vector<std::size_t>> out;
  if (n == 0 || words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    out.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(i),
                     words.begin() + static_cast<std::ptrdiff_t>(i + n));
  return out;
}

std::optional<double> diversity(const std::vector<world::Question>& questions, std::size_t n) {
  if (n < 1 || n > 4) throw std::invalid_argument("diversity: n must be in 1..4");
  if (questions.empty()) throw std::invalid_argument("diversity: no questions");
  std::set<std::vector<std::size_t>> distinct;
  std::size_t total = 0;
  for (const auto& q : questions) {
    for (auto& g : ngrams(q, n)) {
      distinct.insert(std::move(g));
      ++total;
    }
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(distinct.size()) / static_cast<double>(total);
}

std::optional<double> diversity_mean(const std::vector<world::Question>& questions) {
  double sum = 0.0;
  int k = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (auto d = diversity(questions, n)) {
      sum += *d;
      ++k;
    }
  }
  if (k == 0) return std::nullopt;
  return sum / k;
}

std::vector<world::Question> all_questions(const std::vector<game::Transcript>& transcripts) {
  std::vector<world::Question> out;
  for (const auto& t : transcripts)
    for (const auto& r : t.rounds) out.push_back(r.question);
  return out;
}

MetricReport evaluate(const std::vector<game::Transcript>& transcripts, const LanguageModel* lm) {
  MetricReport m;
  m.accuracy = accuracy(transcripts);
  m.relevance = relevance(transcripts);
  m.accuracy_by_round = accuracy_by_round(transcripts);
  auto qs = all_questions(transcripts);
  for (std::size_t n = 1; n <= 4; ++n) m.diversity_n[n - 1] = diversity(qs, n);
  m.diversity = diversity_mean(qs);
  if (lm) m.perplexity = lm->perplexity(qs);
  return m;
}

}  // namespace dwd::eval
