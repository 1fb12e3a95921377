#include "dwd/game.hpp"

#include <stdexcept>

#include "dwd/stochastic.hpp"

namespace dwd::game {

AbotReply abot_answer(const world::Pool& pool, std::size_t target_index,
                      const world::Question& question) {
  if (target_index >= pool.images.size()) throw std::out_of_range("abot_answer: bad target index");
  AbotReply r;
  r.answer = world::ask_oracle(pool.images[target_index], question);
  r.relevance.reserve(pool.images.size());
  for (const auto& img : pool.images)
    r.relevance.push_back(world::ask_oracle(img, question).relevant() ? 1 : 0);
  return r;
}

BatchGame::BatchGame(Player player, std::vector<world::Pool> pools, GameOptions opts, RngStream rng)
    : player_(player), pools_(std::move(pools)), opts_(opts), rng_(std::move(rng)) {
  if (!player_.qbot) throw std::invalid_argument("BatchGame: no q-bot");
  if (pools_.empty()) throw std::invalid_argument("BatchGame: no pools");
  auto batch = agents::PoolBatch::from(pools_);
  enc_ = player_.qbot->encode_pool(batch);
  state_ = player_.qbot->initial_state(pools_.size());
  if (player_.z_supplier) {
    ad::Tape::Pause frozen;
    sup_enc_ = player_.z_supplier->encode_pool(batch);
    sup_state_ = player_.z_supplier->initial_state(pools_.size());
  }
  transcripts_.resize(pools_.size());
  for (std::size_t g = 0; g < pools_.size(); ++g) {
    transcripts_[g].pool = pools_[g];
    transcripts_[g].model_tag = player_.tag;
    transcripts_[g].seed = rng_.seed();
  }
}

const std::vector<world::Question>& BatchGame::ask() {
  if (awaiting_) throw std::logic_error("BatchGame::ask: answer pending");
  const auto& bot = *player_.qbot;
  const std::size_t G = games();
  agents::LatentCode code = bot.plan(enc_, state_, opts_.mode, rng_, opts_.temperature);
  const agents::QBot* speaker_bot = &bot;
  if (player_.z_supplier) {
    // The supplier plans on its own copy of the dialog; its code replaces ours.
    ad::Tape::Pause frozen;
    code = player_.z_supplier->plan(sup_enc_, sup_state_, Mode::kEval, rng_, opts_.temperature);
    speaker_bot = player_.z_supplier;
  }
  const bool train = opts_.mode == Mode::kTrain;
  pending_latent_ = code.indices;
  if (pending_latent_.empty()) pending_latent_.assign(G, {});
  agents::SpeakerOutput spoken;
  if (opts_.relaxed_speaker) {
    if (player_.z_supplier) throw std::logic_error("relaxed speaker with a z supplier");
    spoken = bot.speak(bot.speaker_input(code, train),
                       opts_.straight_through ? agents::DecodeMode::kStraightThrough : agents::DecodeMode::kRelaxed,
                       &rng_, opts_.temperature);
    relaxed_ = spoken;
  } else {
    ad::Tape::Pause frozen;
    spoken = speaker_bot->speak(speaker_bot->speaker_input(code, train), agents::DecodeMode::kGreedy);
    relaxed_.reset();
  }
  pending_.clear();
  for (std::size_t g = 0; g < G; ++g) {
    world::Question q;
    q.tokens = spoken.tokens[g];
    if (auto parsed = world::parse_question(q.tokens)) q.template_id = static_cast<int>(parsed->kind);
    pending_.push_back(std::move(q));
  }
  awaiting_ = true;
  return pending_;
}

agents::PredictOutput BatchGame::answer(const std::vector<world::Answer>& answers) {
  if (!awaiting_) throw std::logic_error("BatchGame::answer: no question pending");
  const std::size_t G = games();
  if (answers.size() != G) throw std::invalid_argument("BatchGame::answer: batch mismatch");
  const auto& bot = *player_.qbot;
  std::vector<std::vector<std::size_t>> tokens;
  for (const auto& q : pending_) tokens.push_back(q.tokens);
  ad::Tensor e_q = relaxed_ ? bot.encode_soft_question(*relaxed_) : bot.encode_question(tokens);
  bot.observe(state_, e_q, bot.embed_answers(answers), pending_, answers);
  if (player_.z_supplier) {
    ad::Tape::Pause frozen;
    const auto& sup = *player_.z_supplier;
    sup.observe(sup_state_, sup.encode_question(tokens), sup.embed_answers(answers), pending_, answers);
  }
  last_ = bot.predict(enc_, state_, opts_.mode, rng_);
  const std::size_t P = pools_.front().images.size();
  const auto probs = last_.probs.data();
  for (std::size_t g = 0; g < G; ++g) {
    RoundRecord rec;
    rec.question = pending_[g];
    rec.answer = answers[g];
    rec.guess.assign(probs.begin() + static_cast<std::ptrdiff_t>(g * P),
                     probs.begin() + static_cast<std::ptrdiff_t>((g + 1) * P));
    rec.latent = pending_latent_[g];
    for (const auto& img : pools_[g].images)
      rec.relevance.push_back(world::ask_oracle(img, pending_[g]).relevant() ? 1 : 0);
    transcripts_[g].final_guess = stoch::argmax(rec.guess);
    transcripts_[g].rounds.push_back(std::move(rec));
  }
  awaiting_ = false;
  relaxed_.reset();
  return last_;
}

ad::Tensor BatchGame::last_cross_entropy() const {
  if (!last_.log_probs.defined()) throw std::logic_error("last_cross_entropy: no prediction yet");
  std::vector<std::size_t> targets;
  for (const auto& p : pools_) targets.push_back(p.target_index);
  return ad::neg(ad::mean_all(ad::pick(last_.log_probs, targets)));
}

std::vector<Transcript> rollout(const Player& player, const std::vector<world::Pool>& pools,
                                std::size_t rounds, std::uint64_t seed, std::size_t batch) {
  if (rounds == 0) throw std::invalid_argument("rollout: R must be at least 1");
  if (batch == 0) batch = 1;
  ad::Tape::Pause inference;
  std::vector<Transcript> out;
  out.reserve(pools.size());
  std::size_t i = 0;
  while (i < pools.size()) {
    std::size_t j = i;
    const std::size_t P = pools[i].images.size();
    while (j < pools.size() && j - i < batch && pools[j].images.size() == P) ++j;
    std::vector<world::Pool> chunk(pools.begin() + static_cast<std::ptrdiff_t>(i),
                                   pools.begin() + static_cast<std::ptrdiff_t>(j));
    BatchGame game(player, std::move(chunk), GameOptions{}, RngStream(seed, "rollout"));
    for (std::size_t r = 0; r < rounds; ++r) {
      const auto& qs = game.ask();
      std::vector<world::Answer> answers;
      for (std::size_t g = 0; g < game.games(); ++g) {
        const auto& pool = game.pools()[g];
        answers.push_back(world::ask_oracle(pool.images[pool.target_index], qs[g]));
      }
      game.answer(answers);
    }
    for (const auto& t : game.transcripts()) out.push_back(t);
    i = j;
  }
  return out;
}

}  // namespace dwd::game
