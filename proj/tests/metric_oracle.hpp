#pragma once

// Brute-force n-gram counting on question text, plus hand-built corpora.

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dwd/rng.hpp"
#include "dwd/world.hpp"

namespace oracle {

/// 100 * distinct / total over space-joined word n-grams; -1 when there are none.
inline double brute_diversity(const std::vector<std::string>& texts, std::size_t n) {
  std::set<std::string> distinct;
  std::size_t total = 0;
  for (const auto& t : texts) {
    std::istringstream is(t);
    std::vector<std::string> w;
    for (std::string s; is >> s;) w.push_back(s);
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::string g;
      for (std::size_t j = i; j < i + n; ++j) g += w[j] + " ";
      distinct.insert(g);
      ++total;
    }
  }
  if (total == 0) return -1.0;
  return 100.0 * static_cast<double>(distinct.size()) / static_cast<double>(total);
}

inline std::vector<dwd::world::Question> to_questions(const std::vector<std::string>& texts) {
  std::vector<dwd::world::Question> out;
  for (const auto& t : texts) out.push_back(dwd::world::Question::from_text(t));
  return out;
}

/// Twenty small corpora: the worked examples, repeats, edge lengths and
/// random word salad.
inline std::vector<std::vector<std::string>> hand_corpora() {
  std::vector<std::vector<std::string>> c = {
      {"what color is", "what shape is"},
      {"what color is the circle ?"},
      {"how many red ?", "how many red ?", "how many red ?"},
      {"is there a blue square ?", "is there a red square ?", "is there a blue circle ?"},
      {"what", "color", "what"},
      {"what shape is the red object ?", "what color is the triangle ?", "how many green ?"},
      {"red red red red", "red red"},
      {"? ? ?", "? ?", "?"},
      {"how many yellow ?", "how many blue ?", "how many green ?", "how many red ?"},
      {"is there a yellow triangle ?", "is there a yellow triangle ?", "what color is the square ?"},
      {"the the", "the"},
      {"what color is the circle ?", "what color is the square ?", "what color is the triangle ?",
       "what color is the circle ?"},
  };
  // word salad over the whole vocabulary
  dwd::RngStream rng(2024, "oracle/corpora");
  std::vector<std::string> words;
  for (std::size_t id = dwd::world::kWhat; id < dwd::world::kQuestionVocabSize; ++id)
    words.emplace_back(dwd::world::question_token_text(id));
  while (c.size() < 20) {
    std::vector<std::string> corpus(1 + rng.below(100));
    for (auto& q : corpus) {
      const std::size_t len = 1 + rng.below(dwd::world::kMaxQuestionLen - 1);
      for (std::size_t i = 0; i < len; ++i) {
        if (i) q += ' ';
        // a narrow alphabet half the time so repeats are common
        q += words[rng.below(c.size() % 2 ? 3 : words.size())];
      }
    }
    c.push_back(std::move(corpus));
  }
  return c;
}

/// Uniformly random token strings with the same lengths as `like`.
inline std::vector<dwd::world::Question> random_token_corpus(const std::vector<dwd::world::Question>& like,
                                                             dwd::RngStream& rng) {
  std::vector<dwd::world::Question> out;
  for (const auto& q : like) {
    dwd::world::Question r;
    for (std::size_t i = 0; i + 1 < q.tokens.size(); ++i)
      r.tokens.push_back(dwd::world::kWhat + rng.below(dwd::world::kQuestionVocabSize - dwd::world::kWhat));
    r.tokens.push_back(dwd::world::kEnd);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace oracle
