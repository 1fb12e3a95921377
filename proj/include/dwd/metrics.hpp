#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dwd/game.hpp"
#include "dwd/language_model.hpp"

namespace dwd::eval {

/// Final-round guess accuracy.
double accuracy(const std::vector<game::Transcript>& transcripts);
/// Mean over all rounds of the max over pool images of the relevance indicator.
double relevance(const std::vector<game::Transcript>& transcripts);
/// Per-round accuracy; all transcripts must have the same number of rounds.
std::vector<double> accuracy_by_round(const std::vector<game::Transcript>& transcripts);

/// Word n-grams (end token excluded) of one question.
std::vector<std::vector<std::size_t>> ngrams(const world::Question& q, std::size_t n);
/// 100 * distinct / total n-grams. nullopt when no question has n words.
std::optional<double> diversity(const std::vector<world::Question>& questions, std::size_t n);
/// Mean of the defined diversity values for n = 1..4.
std::optional<double> diversity_mean(const std::vector<world::Question>& questions);

std::vector<world::Question> all_questions(const std::vector<game::Transcript>& transcripts);

struct MetricReport {
  double accuracy = 0.0;
  std::optional<double> perplexity;
  double relevance = 0.0;
  std::array<std::optional<double>, 4> diversity_n;
  std::optional<double> diversity;  // mean over n
  std::vector<double> accuracy_by_round;
};

MetricReport evaluate(const std::vector<game::Transcript>& transcripts, const LanguageModel* lm);

}  // namespace dwd::eval
