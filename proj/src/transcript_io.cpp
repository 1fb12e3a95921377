#include "dwd/transcript_io.hpp"

#include <fstream>
#include <stdexcept>

namespace dwd::io {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (world::to_string(static_cast<E>(i)) == s) return static_cast<E>(i);
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

json image_to_json(const world::WorldImage& img) {
  json slots = json::array();
  for (const auto& s : img.slots) {
    if (!s.present) {
      slots.push_back({{"present", false}});
      continue;
    }
    slots.push_back({{"present", true},
                     {"shape", std::string(world::to_string(s.shape))},
                     {"color", std::string(world::to_string(s.color))},
                     {"size", std::string(world::to_string(s.size))}});
  }
  return {{"domain", std::string(world::to_string(img.domain))}, {"slots", slots}};
}

world::WorldImage image_from_json(const json& j) {
  world::WorldImage img;
  auto d = world::parse_domain(j.at("domain").get<std::string>());
  if (!d) throw std::invalid_argument("unknown domain");
  img.domain = *d;
  for (const auto& s : j.at("slots")) {
    world::Slot slot;
    if (s.at("present").get<bool>()) {
      slot.present = true;
      slot.shape = parse_enum<world::ObjShape, world::kNumShapes>(s.at("shape"), "shape");
      slot.color = parse_enum<world::Color, world::kNumColors>(s.at("color"), "color");
      slot.size = parse_enum<world::Size, world::kNumSizes>(s.at("size"), "size");
    }
    img.slots.push_back(slot);
  }
  return img;
}

json pool_to_json(const world::Pool& pool) {
  json images = json::array();
  for (const auto& img : pool.images) images.push_back(image_to_json(img));
  return {{"sampling", std::string(world::to_string(pool.sampling))},
          {"target_index", pool.target_index + 1},
          {"images", images}};
}

world::Pool pool_from_json(const json& j) {
  world::Pool p;
  const auto s = j.at("sampling").get<std::string>();
  if (s == "contrast") p.sampling = world::Sampling::kContrast;
  else if (s == "random") p.sampling = world::Sampling::kRandom;
  else throw std::invalid_argument("unknown sampling '" + s + "'");
  for (const auto& img : j.at("images")) p.images.push_back(image_from_json(img));
  const auto t = j.at("target_index").get<std::size_t>();
  if (t < 1 || t > p.images.size()) throw std::invalid_argument("target_index out of range");
  p.target_index = t - 1;
  return p;
}

json transcript_to_json(const game::Transcript& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) {
    rounds.push_back({{"question", r.question.text()},
                      {"question_tokens", r.question.tokens},
                      {"answer", std::string(world::answer_token_text(r.answer.token))},
                      {"guess", r.guess},
                      {"latent", r.latent},
                      {"relevance", r.relevance}});
  }
  return {{"model", t.model_tag},
          {"seed", t.seed},
          {"pool", pool_to_json(t.pool)},
          {"rounds", rounds},
          {"final_guess", t.final_guess + 1},
          {"correct", t.correct()}};
}

game::Transcript transcript_from_json(const json& j) {
  game::Transcript t;
  t.model_tag = j.at("model").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.pool = pool_from_json(j.at("pool"));
  for (const auto& r : j.at("rounds")) {
    game::RoundRecord rec;
    rec.question.tokens = r.at("question_tokens").get<std::vector<std::size_t>>();
    if (auto p = world::parse_question(rec.question.tokens))
      rec.question.template_id = static_cast<int>(p->kind);
    auto a = world::parse_answer_token(r.at("answer").get<std::string>());
    if (!a) throw std::invalid_argument("unknown answer token");
    rec.answer.token = *a;
    rec.guess = r.at("guess").get<std::vector<double>>();
    rec.latent = r.at("latent").get<std::vector<std::size_t>>();
    rec.relevance = r.at("relevance").get<std::vector<std::uint8_t>>();
    t.rounds.push_back(std::move(rec));
  }
  const auto g = j.at("final_guess").get<std::size_t>();
  if (g < 1 || g > t.pool.images.size()) throw std::invalid_argument("final_guess out of range");
  t.final_guess = g - 1;
  return t;
}

void append_transcripts(const std::filesystem::path& path, const std::vector<game::Transcript>& ts) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  for (const auto& t : ts) out << transcript_to_json(t).dump() << "\n";
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<game::Transcript> read_transcripts(const std::filesystem::path& path) {
  std::vector<game::Transcript> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(transcript_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dwd::io
