#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dwd/play.hpp"
#include "dwd/trainer.hpp"
#include "dwd/transcript_io.hpp"

using namespace dwd;

namespace {

struct Fixture {
  train::Model model{train::init_checkpoint(train::Pretraining::kDiscreteElbo, 8), "init"};
  world::Pool pool;
  Fixture() {
    RngStream rng(8, "session/pool");
    pool = world::sample_random_pool(4, world::WorldConfig{}, rng);
  }
};

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("oracle answers typed at the prompt reproduce the rollout") {
  Fixture f;
  for (std::size_t R : {1, 5, 9}) {
    auto expected = game::rollout_one(f.model.player(), f.pool, R, 21);
    std::string script;
    for (const auto& r : expected.rounds)
      script += std::string(world::answer_token_text(r.answer.token)) + "\n";
    std::istringstream in(script);
    std::ostringstream out;
    auto res = play::run(f.model.player(), f.pool, R, 21, in, out);
    REQUIRE(res.completed);
    REQUIRE(res.transcript.has_value());
    CHECK(*res.transcript == expected);
    CHECK(count(out.str(), "answer> ") == R);
    CHECK(count(out.str(), "Q-bot asks: ") == R);
    CHECK(out.str().find("Q-bot guesses image " + std::to_string(expected.final_guess + 1)) !=
          std::string::npos);
  }
}

TEST_CASE("bad answers are reprompted") {
  Fixture f;
  auto expected = game::rollout_one(f.model.player(), f.pool, 2, 3);
  std::string script = "maybe\n\n";
  for (const auto& r : expected.rounds)
    script += "  " + std::string(world::answer_token_text(r.answer.token)) + "\n";
  std::istringstream in(script);
  std::ostringstream out;
  auto res = play::run(f.model.player(), f.pool, 2, 3, in, out);
  REQUIRE(res.completed);
  CHECK(*res.transcript == expected);
  CHECK(count(out.str(), "unknown answer") == 2);
  CHECK(count(out.str(), "answer> ") == 4);
}

TEST_CASE("quitting or closing input saves nothing") {
  Fixture f;
  auto store = std::filesystem::temp_directory_path() / "dwd_play_store.jsonl";
  std::filesystem::remove(store);
  {
    std::istringstream in("yes\nquit\n");
    std::ostringstream out;
    auto res = play::run(f.model.player(), f.pool, 5, 1, in, out, store);
    CHECK_FALSE(res.completed);
    CHECK_FALSE(res.transcript.has_value());
    CHECK_FALSE(std::filesystem::exists(store));
  }
  {
    std::istringstream in("yes\n");
    std::ostringstream out;
    auto res = play::run(f.model.player(), f.pool, 5, 1, in, out, store);
    CHECK_FALSE(res.completed);
    CHECK_FALSE(std::filesystem::exists(store));
  }
  {
    std::istringstream in("no\nno\n");
    std::ostringstream out;
    auto res = play::run(f.model.player(), f.pool, 2, 1, in, out, store);
    REQUIRE(res.completed);
    auto saved = io::read_transcripts(store);
    REQUIRE(saved.size() == 1);
    CHECK(saved.front() == *res.transcript);
  }
  std::filesystem::remove(store);
}
