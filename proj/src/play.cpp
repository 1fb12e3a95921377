#include "dwd/play.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "dwd/svg.hpp"
#include "dwd/transcript_io.hpp"

namespace dwd::play {

namespace {

std::string vocabulary() {
  std::string s;
  for (std::size_t a = 0; a < world::kAnswerVocabSize; ++a) {
    if (a) s += ' ';
    s += world::answer_token_text(a);
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

PlayResult run(const game::Player& player, const world::Pool& pool, std::size_t rounds,
               std::uint64_t seed, std::istream& in, std::ostream& out,
               const std::optional<std::filesystem::path>& store) {
  ad::Tape::Pause inference;
  out << "Pool of " << pool.images.size() << " images. You answer for the image marked *.\n";
  for (std::size_t i = 0; i < pool.images.size(); ++i) {
    out << (i == pool.target_index ? " * " : "   ") << "image " << i + 1 << ": "
        << render::describe(pool.images[i]) << "\n";
  }
  out << "Answers: " << vocabulary() << "  (or quit)\n";
  game::BatchGame g(player, {pool}, game::GameOptions{}, RngStream(seed, "rollout"));
  PlayResult result;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto& qs = g.ask();
    out << "Round " << r + 1 << "/" << rounds << ". Q-bot asks: " << qs.front().text() << "\n";
    std::optional<std::size_t> token;
    while (!token) {
      out << "answer> " << std::flush;
      std::string line;
      if (!std::getline(in, line)) {
        out << "\ninput closed; game abandoned\n";
        return result;
      }
      line = trim(line);
      if (line == "quit" || line == "q") {
        out << "quit; nothing saved\n";
        return result;
      }
      token = world::parse_answer_token(line);
      if (!token) out << "unknown answer '" << line << "'. Choose one of: " << vocabulary() << "\n";
    }
    g.answer({world::Answer{*token}});
  }
  const auto& t = g.transcripts().front();
  out << "Q-bot guesses image " << t.final_guess + 1 << ": " << (t.correct() ? "correct" : "wrong")
      << " (secret was image " << pool.target_index + 1 << ")\n";
  result.completed = true;
  result.transcript = t;
  if (store) io::append_transcripts(*store, {t});
  return result;
}

}  // namespace dwd::play
