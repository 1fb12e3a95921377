#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dwd/game.hpp"
#include "dwd/stochastic.hpp"
#include "fd_oracle.hpp"

using namespace dwd;
using agents::Mode;
using agents::QBot;

namespace {

struct Bot {
  ad::ParamStore store;
  std::unique_ptr<QBot> qbot;
  explicit Bot(agents::ModelConfig cfg = {}, std::uint64_t seed = 3) {
    RngStream init(seed, "init");
    qbot = std::make_unique<QBot>(store, cfg, "", &init);
  }
  game::Player player() const { return {qbot.get(), nullptr, "test"}; }
  void zero(const std::string& prefix) {
    for (const auto& n : store.names_with_prefix(prefix)) {
      auto t = store.get(n);
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
  }
};

std::vector<world::Pool> random_pools(std::size_t n, std::size_t P, std::uint64_t seed) {
  RngStream rng(seed, "pools");
  std::vector<world::Pool> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(world::sample_random_pool(P, {}, rng));
  return out;
}

world::Pool identical_pool(std::size_t P, std::uint64_t seed) {
  RngStream rng(seed, "img");
  auto img = world::generate_image({}, rng);
  world::Pool p;
  p.images.assign(P, img);
  p.target_index = 0;
  return p;
}

void check_rows_sum_to_one(const ad::Tensor& t) {
  const std::size_t cols = t.shape().back();
  for (std::size_t r = 0; r < t.size() / cols; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < cols; ++k) s += t[r * cols + k];
    CHECK(std::abs(s - 1) < 1e-6);
  }
}

}  // namespace

TEST_CASE("context coder attention normalizes") {
  Bot b;
  RngStream rng(1, "x");
  for (std::size_t P : {1u, 2u, 4u, 9u}) {
    std::vector<world::Pool> pools;
    if (P == 1) {
      // not a game size, but the attention must still normalize
      RngStream r(1, "single");
      for (int i = 0; i < 3; ++i) pools.push_back({{world::generate_image({}, r)}, 0, world::Sampling::kRandom});
    } else {
      pools = random_pools(3, P, P);
    }
    auto enc = b.qbot->encode_pool(agents::PoolBatch::from(pools));
    auto st = b.qbot->initial_state(3);
    auto ctx = b.qbot->context_encode(enc, st.h_bar, st.last_q, st.last_a);
    CHECK(ctx.alpha.shape() == ad::Shape{3, P});
    check_rows_sum_to_one(ctx.alpha);
    check_rows_sum_to_one(ctx.beta);
    if (P == 1)
      for (double a : ctx.alpha.data()) CHECK(std::abs(a - 1) < 1e-12);
  }
}

TEST_CASE("identical images give uniform attention and guesses") {
  Bot b;
  RngStream rng(2, "x");
  for (std::size_t P : {2u, 4u, 9u}) {
    std::vector<world::Pool> pools = {identical_pool(P, P)};
    auto enc = b.qbot->encode_pool(agents::PoolBatch::from(pools));
    auto st = b.qbot->initial_state(1);
    auto ctx = b.qbot->context_encode(enc, st.h_bar, st.last_q, st.last_a);
    for (double a : ctx.alpha.data()) CHECK(std::abs(a - 1.0 / P) < 1e-6);
    auto pred = b.qbot->predict(enc, st, Mode::kEval, rng);
    for (double p : pred.probs.data()) CHECK(std::abs(p - 1.0 / P) < 1e-6);
  }
}

TEST_CASE("dialog cell output gate with zero weights") {
  Bot b;
  b.zero("dialog.w1.");
  b.zero("dialog.w2.");
  RngStream rng(3, "x");
  auto pools = random_pools(2, 4, 1);
  auto enc = b.qbot->encode_pool(agents::PoolBatch::from(pools));
  auto st = b.qbot->initial_state(2);
  auto ctx = b.qbot->context_encode(enc, st.h_bar, st.last_q, st.last_a);
  auto s1 = st, s2 = st;
  b.qbot->dialog_rnn_step(ctx.x_context, s1, Mode::kEval, rng);
  b.qbot->dialog_rnn_step(ctx.x_context, s2, Mode::kEval, rng);
  for (std::size_t i = 0; i < s1.h_bar.size(); ++i) {
    CHECK(s1.h_bar[i] == doctest::Approx(0.5 * std::tanh(s1.cell[i])).epsilon(1e-12));
    CHECK(s1.h_bar[i] == s2.h_bar[i]);
    CHECK(s1.h[i] == s2.h[i]);
  }
}

TEST_CASE("question policy") {
  SUBCASE("zero weights give uniform logits and lowest-index argmax") {
    Bot b;
    b.zero("policy.wz.");
    RngStream rng(4, "x");
    auto st = b.qbot->initial_state(3);
    auto code = b.qbot->question_policy(st, Mode::kEval, rng, 1.0);
    REQUIRE(code.logits.shape() == ad::Shape{3 * 8, 4});
    for (double l : code.logits.data()) CHECK(l == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
    REQUIRE(code.indices.size() == 3);
    for (const auto& idx : code.indices) {
      CHECK(idx.size() == 8);
      for (auto i : idx) CHECK(i == 0);
    }
  }
  SUBCASE("indices are the argmax of the soft sample") {
    Bot b;
    RngStream rng(5, "x");
    auto st = b.qbot->initial_state(2);
    auto code = b.qbot->question_policy(st, Mode::kTrain, rng, 1.0);
    check_rows_sum_to_one(code.soft);
    for (std::size_t g = 0; g < 2; ++g)
      for (std::size_t n = 0; n < 8; ++n) {
        std::vector<double> row(4);
        for (std::size_t k = 0; k < 4; ++k) row[k] = code.soft.at(g * 8 + n, k);
        CHECK(code.indices[g][n] == stoch::argmax(row));
      }
  }
}

TEST_CASE("speaker") {
  Bot b;
  RngStream rng(6, "x");
  auto st = b.qbot->initial_state(5);
  auto code = b.qbot->question_policy(st, Mode::kTrain, rng, 1.0);
  auto init = b.qbot->speaker_input(code, false);
  auto greedy = b.qbot->speak(init, agents::DecodeMode::kGreedy);
  for (const auto& t : greedy.tokens) {
    CHECK(!t.empty());
    CHECK(t.size() <= world::kMaxQuestionLen);
    CHECK(t.back() == world::kEnd);
    CHECK(std::count(t.begin(), t.end(), std::size_t{world::kEnd}) == 1);
  }
  auto forced = b.qbot->speak_teacher_forced(init, greedy.tokens);
  for (std::size_t g = 0; g < 5; ++g) {
    REQUIRE(forced.token_log_probs[g].size() == greedy.token_log_probs[g].size());
    double sum = 0;
    for (std::size_t i = 0; i < greedy.token_log_probs[g].size(); ++i) {
      CHECK(forced.token_log_probs[g][i] == doctest::Approx(greedy.token_log_probs[g][i]).epsilon(1e-12));
      sum += greedy.token_log_probs[g][i];
    }
    CHECK(forced.log_likelihood[g] == doctest::Approx(sum).epsilon(1e-12));
  }
  std::vector<std::vector<std::size_t>> too_long(5, std::vector<std::size_t>(9, world::kRed));
  too_long[0].back() = world::kEnd;
  CHECK_THROWS(b.qbot->speak_teacher_forced(init, too_long));
}

TEST_CASE("posterior") {
  Bot b;
  auto pools = random_pools(3, 2, 9);
  auto enc = b.qbot->encode_pool(agents::PoolBatch::from(pools));
  std::vector<std::vector<std::size_t>> qs = {world::Question::from_text("how many red ?").tokens,
                                              world::Question::from_text("what color is the circle ?").tokens,
                                              world::Question::from_text("is there a blue square ?").tokens};
  auto p1 = b.qbot->encode_posterior(enc, qs);
  auto p2 = b.qbot->encode_posterior(enc, qs);
  REQUIRE(p1.log_probs.shape() == ad::Shape{24, 4});
  for (std::size_t r = 0; r < 24; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += std::exp(p1.log_probs.at(r, k));
    CHECK(std::abs(std::log(s)) < 1e-9);
  }
  CHECK(std::equal(p1.log_probs.data().begin(), p1.log_probs.data().end(), p2.log_probs.data().begin()));
}

TEST_CASE("gradient reach with a frozen speaker") {
  Bot b;
  auto pools = random_pools(8, 4, 12);
  ad::Tape tape;
  {
    ad::Tape::Scope scope(tape);
    game::BatchGame g(b.player(), pools, {Mode::kTrain, 1.0, false}, RngStream(1, "train"));
    ad::Tensor loss = ad::Tensor::scalar(0.0);
    for (int r = 0; r < 3; ++r) {
      const auto& qs = g.ask();
      std::vector<world::Answer> ans;
      for (std::size_t i = 0; i < pools.size(); ++i)
        ans.push_back(world::ask_oracle(pools[i].images[pools[i].target_index], qs[i]));
      g.answer(ans);
      loss = ad::add(loss, g.last_cross_entropy());
    }
    ad::backward(tape, loss);
  }
  auto touched = [&](const std::string& prefix) {
    for (const auto& n : b.store.names_with_prefix(prefix)) {
      const auto& t = b.store.get(n);
      if (!t.has_grad()) continue;
      for (double v : t.grad())
        if (v != 0.0) return true;
    }
    return false;
  };
  CHECK(touched("ctx."));
  CHECK(touched("dialog."));
  CHECK(touched("policy.wz."));
  CHECK(touched("predictor."));
  CHECK_FALSE(touched("speaker."));
}

TEST_CASE("straight-through speaker: hard forward, gradient still reaches the speaker") {
  Bot b;
  auto st = b.qbot->initial_state(4);
  RngStream prng(2, "p");
  auto init = b.qbot->speaker_input(b.qbot->question_policy(st, Mode::kTrain, prng, 1.0), false);
  RngStream r1(9, "tok"), r2(9, "tok");
  auto soft = b.qbot->speak(init, agents::DecodeMode::kRelaxed, &r1);
  auto hard = b.qbot->speak(init, agents::DecodeMode::kStraightThrough, &r2);
  CHECK(soft.tokens == hard.tokens);
  const std::size_t V = world::kQuestionVocabSize;
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t t = 0; t < hard.tokens[g].size(); ++t)
      for (std::size_t v = 0; v < V; ++v)
        CHECK(hard.soft_tokens[t].at(g, v) == doctest::Approx(v == hard.tokens[g][t] ? 1.0 : 0.0).epsilon(1e-12));

  auto pools = random_pools(6, 2, 4);
  ad::Tape tape;
  {
    ad::Tape::Scope scope(tape);
    game::GameOptions opts{Mode::kTrain, 1.0, true, true};
    game::BatchGame g(b.player(), pools, opts, RngStream(1, "train"));
    const auto& qs = g.ask();
    std::vector<world::Answer> ans;
    for (std::size_t i = 0; i < pools.size(); ++i)
      ans.push_back(world::ask_oracle(pools[i].images[pools[i].target_index], qs[i]));
    g.answer(ans);
    ad::backward(tape, g.last_cross_entropy());
  }
  bool reached = false;
  for (const auto& n : b.store.names_with_prefix("speaker.")) {
    const auto& t = b.store.get(n);
    if (t.has_grad())
      for (double v : t.grad()) reached = reached || v != 0.0;
  }
  CHECK(reached);
}

TEST_CASE("stage-2 style gradient through the residual matches finite differences") {
  agents::ModelConfig cfg;
  cfg.hidden = 8;
  cfg.embed = 4;
  cfg.n_latent = 2;
  cfg.k_categories = 3;
  cfg.dropout = 0.0;
  Bot b(cfg, 21);
  auto pools = random_pools(2, 2, 5);
  auto w = b.store.get("policy.wz.w");
  // loss as a function of W^z alone, noise fixed by reseeding every evaluation
  fd::Fn f = [&](const std::vector<ad::Tensor>& x) {
    std::copy(x[0].data().begin(), x[0].data().end(), w.mutable_data().begin());
    game::BatchGame g(b.player(), pools, {Mode::kTrain, 1.0, false}, RngStream(2, "fd"));
    const auto& qs = g.ask();
    std::vector<world::Answer> ans;
    for (std::size_t i = 0; i < pools.size(); ++i)
      ans.push_back(world::ask_oracle(pools[i].images[pools[i].target_index], qs[i]));
    g.answer(ans);
    return g.last_cross_entropy();
  };
  auto proxy = ad::Tensor::from(w.shape(), std::vector<double>(w.data().begin(), w.data().end()));
  // analytic gradient read directly from W^z
  w.zero_grad();
  {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    ad::backward(tape, f({proxy}));
  }
  std::vector<double> analytic(w.grad().begin(), w.grad().end());
  ad::Tape::Pause pause;
  double worst = 0;
  auto data = proxy.mutable_data();
  for (std::size_t j = 0; j < proxy.size(); ++j) {
    const double keep = data[j];
    data[j] = keep + 1e-5;
    const double up = f({proxy}).item();
    data[j] = keep - 1e-5;
    const double down = f({proxy}).item();
    data[j] = keep;
    worst = std::max(worst, fd::rel_error(analytic[j], (up - down) / 2e-5));
  }
  f({proxy});
  CHECK(worst < 1e-4);
}

TEST_CASE("one checkpoint plays every pool size and round count") {
  Bot b;
  for (std::size_t P : {2u, 4u, 9u})
    for (std::size_t R : {1u, 5u, 9u}) {
      auto ts = game::rollout(b.player(), random_pools(3, P, P * 10 + R), R, 1);
      REQUIRE(ts.size() == 3);
      for (const auto& t : ts) {
        CHECK(t.rounds.size() == R);
        CHECK(t.final_guess < P);
        for (const auto& r : t.rounds) {
          CHECK(r.guess.size() == P);
          CHECK(std::abs(std::accumulate(r.guess.begin(), r.guess.end(), 0.0) - 1) < 1e-6);
          CHECK(r.relevance.size() == P);
          CHECK(r.latent.size() == 8);
        }
      }
    }
}

TEST_CASE("batched and single rollouts agree exactly; rollouts are deterministic") {
  Bot b;
  auto pools = random_pools(6, 4, 77);
  auto batched = game::rollout(b.player(), pools, 5, 3, 32);
  auto again = game::rollout(b.player(), pools, 5, 3, 32);
  CHECK(batched == again);
  for (std::size_t i = 0; i < pools.size(); ++i) CHECK(game::rollout_one(b.player(), pools[i], 5, 3) == batched[i]);
}

TEST_CASE("facts grow one per round") {
  Bot b;
  auto pools = random_pools(2, 2, 4);
  game::BatchGame g(b.player(), pools, {}, RngStream(1, "rollout"));
  CHECK_THROWS_AS(g.answer({world::Answer{}, world::Answer{}}), std::logic_error);
  for (std::size_t r = 1; r <= 5; ++r) {
    g.ask();
    CHECK_THROWS_AS(g.ask(), std::logic_error);
    g.answer({world::Answer{world::kAnsYes}, world::Answer{world::kAnsNo}});
    for (const auto& t : g.transcripts()) CHECK(t.rounds.size() == r);
  }
}

TEST_CASE("oracle a-bot") {
  world::Pool pool;
  world::WorldImage a, b;
  a.slots.assign(4, world::Slot{});
  b.slots.assign(4, world::Slot{});
  a.slots[0] = {true, world::ObjShape::kCircle, world::Color::kRed, world::Size::kSmall};
  b.slots[0] = {true, world::ObjShape::kSquare, world::Color::kBlue, world::Size::kLarge};
  pool.images = {a, b};
  auto absent = game::abot_answer(pool, 0, world::Question::from_text("what color is the triangle ?"));
  CHECK(absent.answer.token == world::kAnsNotRelevant);
  CHECK(absent.relevance == std::vector<std::uint8_t>{0, 0});
  auto contrast = game::abot_answer(pool, 1, world::Question::from_text("is there a red circle ?"));
  CHECK(contrast.answer.token == world::kAnsNo);
  CHECK(contrast.relevance == std::vector<std::uint8_t>{1, 1});
  world::Question soup;
  soup.tokens = {world::kRed, world::kHow, world::kThe, world::kEnd};
  CHECK(game::abot_answer(pool, 0, soup).answer.token == world::kAnsNotRelevant);
  CHECK_THROWS(game::abot_answer(pool, 2, soup));
}

TEST_CASE("model config round trip") {
  agents::ModelConfig c;
  c.latent = agents::LatentKind::kContinuous;
  c.identity_policy = true;
  c.with_encoder = false;
  c.dropout = 0.25;
  auto back = agents::ModelConfig::from_kv(c.to_kv());
  CHECK(back.to_kv() == c.to_kv());
}
