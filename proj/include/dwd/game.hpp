#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dwd/qbot.hpp"

namespace dwd::game {

using agents::Mode;

/// One round as seen from outside: question asked, answer received, guess made.
struct RoundRecord {
  world::Question question;
  world::Answer answer;
  std::vector<double> guess;             // distribution over the pool
  std::vector<std::size_t> latent;       // code indices (empty for continuous codes)
  std::vector<std::uint8_t> relevance;   // per pool image: oracle answer is not not_relevant
  bool operator==(const RoundRecord&) const = default;
};

struct Transcript {
  world::Pool pool;
  std::vector<RoundRecord> rounds;
  std::size_t final_guess = 0;  // 0-based
  std::string model_tag;
  std::uint64_t seed = 0;
  bool correct() const { return final_guess == pool.target_index; }
  bool operator==(const Transcript&) const = default;
};

struct AbotReply {
  world::Answer answer;
  std::vector<std::uint8_t> relevance;
};

/// Oracle A-bot: answers about the target; relevance indicator per image.
AbotReply abot_answer(const world::Pool& pool, std::size_t target_index,
                      const world::Question& question);

/// The question-asking side of a game. With a z supplier, every latent code
/// the guesser would speak from is replaced by the supplier's code.
struct Player {
  const agents::QBot* qbot = nullptr;
  const agents::QBot* z_supplier = nullptr;
  std::string tag;
};

struct GameOptions {
  Mode mode = Mode::kEval;
  double temperature = 1.0;
  /// Per-token Concrete relaxation of the speaker so task gradients reach it.
  bool relaxed_speaker = false;
  /// Relaxed tokens are hard one-hots going forward (gradient still soft).
  bool straight_through = false;
};

/// G games with equal pool size played in lockstep. Each row is computed
/// independently, so a batch of one reproduces the batched result exactly.
class BatchGame {
 public:
  BatchGame(Player player, std::vector<world::Pool> pools, GameOptions opts, RngStream rng);

  std::size_t games() const { return pools_.size(); }
  std::size_t round() const { return state_.round; }
  bool awaiting_answer() const { return awaiting_; }

  /// Planner and speaker for the next round.
  const std::vector<world::Question>& ask();
  /// Records the answers, runs the predictor; the returned log-probs carry
  /// the graph when a tape is active.
  agents::PredictOutput answer(const std::vector<world::Answer>& answers);

  /// Mean over games of -log p(target) for the last predictor output.
  ad::Tensor last_cross_entropy() const;

  const std::vector<Transcript>& transcripts() const { return transcripts_; }
  const std::vector<world::Pool>& pools() const { return pools_; }

 private:
  Player player_;
  std::vector<world::Pool> pools_;
  GameOptions opts_;
  RngStream rng_;
  agents::PoolEncoding enc_, sup_enc_;
  agents::DialogState state_, sup_state_;
  std::vector<world::Question> pending_;
  std::vector<std::vector<std::size_t>> pending_latent_;
  std::optional<agents::SpeakerOutput> relaxed_;
  agents::PredictOutput last_;
  bool awaiting_ = false;
  std::vector<Transcript> transcripts_;
};

/// Eval-mode games against the oracle. Pools are batched in runs of equal
/// size, at most `batch` at a time.
std::vector<Transcript> rollout(const Player& player, const std::vector<world::Pool>& pools,
                                std::size_t rounds, std::uint64_t seed, std::size_t batch = 32);

inline Transcript rollout_one(const Player& player, const world::Pool& pool, std::size_t rounds,
                              std::uint64_t seed) {
  return rollout(player, {pool}, rounds, seed, 1).front();
}

}  // namespace dwd::game
