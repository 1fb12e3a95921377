#include "dwd/game_service.hpp"

#include <iomanip>
#include <random>
#include <sstream>

#include "dwd/svg.hpp"
#include "dwd/transcript_io.hpp"
#include "httplib.h"

namespace dwd::service {

namespace {

Response error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return {status, extra};
}

json answer_vocabulary() {
  json v = json::array();
  for (std::size_t a = 0; a < world::kAnswerVocabSize; ++a)
    v.push_back(std::string(world::answer_token_text(a)));
  return v;
}

}  // namespace

json Stats::to_json() const {
  json j = {{"games", games}};
  if (games) j["accuracy"] = static_cast<double>(correct) / static_cast<double>(games);
  json models = json::object();
  for (const auto& [tag, gc] : per_model) {
    json m = {{"games", gc.first}};
    if (gc.first) m["accuracy"] = static_cast<double>(gc.second) / static_cast<double>(gc.first);
    models[tag] = m;
  }
  j["models"] = models;
  return j;
}

Stats fold_stats(const std::vector<game::Transcript>& transcripts) {
  Stats s;
  for (const auto& t : transcripts) {
    ++s.games;
    auto& m = s.per_model[t.model_tag];
    ++m.first;
    if (t.correct()) {
      ++s.correct;
      ++m.second;
    }
  }
  return s;
}

struct GameService::Session {
  std::mutex mu;
  std::string id;
  std::shared_ptr<const train::Model> model;
  world::Pool pool;
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  std::unique_ptr<game::BatchGame> game;
  std::string phase;  // awaiting_answer | awaiting_question | finished
  Clock::time_point last_used;
  bool expired = false;

  json images() const {
    json imgs = json::array();
    for (const auto& img : pool.images) imgs.push_back(render::image_svg(img));
    return imgs;
  }
  json history() const {
    json h = json::array();
    const auto& t = game->transcripts().front();
    for (std::size_t r = 0; r < t.rounds.size(); ++r) {
      h.push_back({{"round", r + 1},
                   {"question", t.rounds[r].question.text()},
                   {"answer", std::string(world::answer_token_text(t.rounds[r].answer.token))}});
    }
    return h;
  }
  std::string current_question() const { return game->awaiting_answer() ? pending_text : ""; }
  std::string pending_text;
};

GameService::GameService(std::vector<std::shared_ptr<const train::Model>> models, ServiceConfig cfg)
    : models_(std::move(models)), cfg_(std::move(cfg)) {
  if (models_.empty()) throw std::invalid_argument("GameService: no models loaded");
  for (const auto& m : models_)
    if (!m) throw std::invalid_argument("GameService: null model");
  if (!cfg_.store_dir.empty()) std::filesystem::create_directories(cfg_.store_dir);
  stats_ = recompute_stats();
  id_salt_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
}

GameService::~GameService() = default;

std::filesystem::path GameService::transcript_path() const {
  return cfg_.store_dir / "transcripts.jsonl";
}

Stats GameService::recompute_stats() const {
  if (cfg_.store_dir.empty()) return {};
  return fold_stats(io::read_transcripts(transcript_path()));
}

std::string GameService::new_id() {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0')
     << (id_salt_ ^ (0x9E3779B97F4A7C15ull * (id_counter_ + 1))) << std::setw(6) << id_counter_;
  ++id_counter_;
  return os.str();
}

std::size_t GameService::expire_idle() {
  std::lock_guard lock(mu_);
  const auto now = cfg_.clock();
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock slock(it->second->mu, std::try_to_lock);
    if (slock.owns_lock() && now - it->second->last_used > cfg_.idle_timeout) {
      it->second->expired = true;
      slock.unlock();
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::size_t GameService::live_sessions() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::shared_ptr<GameService::Session> GameService::find(const std::string& id) {
  expire_idle();
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Response GameService::create_session(const json& body) {
  if (!body.is_object()) return error(400, "request body must be a JSON object");
  std::size_t P = 0, R = 0;
  try {
    if (!body.contains("pool_size") || !body.contains("rounds"))
      return error(400, "pool_size and rounds are required");
    P = body.at("pool_size").get<std::size_t>();
    R = body.at("rounds").get<std::size_t>();
  } catch (const json::exception&) {
    return error(400, "pool_size and rounds must be positive integers");
  }
  if (P != 2 && P != 4 && P != 9) return error(400, "pool_size must be 2, 4 or 9");
  if (R != 1 && R != 5 && R != 9) return error(400, "rounds must be 1, 5 or 9");
  std::uint64_t seed = 0;
  if (body.contains("seed") && !body["seed"].is_null()) {
    try {
      seed = body["seed"].get<std::uint64_t>();
    } catch (const json::exception&) {
      return error(400, "seed must be a non-negative integer");
    }
  } else {
    seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  }
  std::shared_ptr<const train::Model> model = models_.front();
  if (body.contains("model") && !body["model"].is_null()) {
    if (!body["model"].is_string()) return error(400, "model must be a string");
    const auto tag = body["model"].get<std::string>();
    model = nullptr;
    for (const auto& m : models_)
      if (m->tag() == tag) model = m;
    if (!model) {
      json known = json::array();
      for (const auto& m : models_) known.push_back(m->tag());
      return error(400, "unknown model '" + tag + "'", {{"models", known}});
    }
  }

  auto s = std::make_shared<Session>();
  s->model = model;
  s->rounds = R;
  s->seed = seed;
  world::WorldConfig wc;
  RngStream pool_rng(seed, "session/pool");
  s->pool = world::sample_random_pool(P, wc, pool_rng);
  {
    ad::Tape::Pause inference;
    s->game = std::make_unique<game::BatchGame>(model->player(), std::vector<world::Pool>{s->pool},
                                                game::GameOptions{}, RngStream(seed, "rollout"));
    s->pending_text = s->game->ask().front().text();
  }
  s->phase = "awaiting_answer";
  s->last_used = cfg_.clock();
  {
    std::lock_guard lock(mu_);
    s->id = new_id();
    sessions_[s->id] = s;
  }
  json out = {{"session_id", s->id},
              {"model", model->tag()},
              {"pool_size", P},
              {"rounds", R},
              {"seed", seed},
              {"target_index", s->pool.target_index + 1},
              {"images", s->images()},
              {"pool", io::pool_to_json(s->pool)["images"]},
              {"round", 1},
              {"phase", s->phase},
              {"question", s->pending_text},
              {"answer_vocabulary", answer_vocabulary()}};
  return {201, out};
}

Response GameService::get_session(const std::string& id) {
  auto s = find(id);
  if (!s) return error(404, "unknown or expired session '" + id + "'");
  std::lock_guard slock(s->mu);
  if (s->expired) return error(404, "session expired");
  s->last_used = cfg_.clock();
  const auto& t = s->game->transcripts().front();
  json out = {{"session_id", s->id},
              {"model", s->model->tag()},
              {"pool_size", s->pool.images.size()},
              {"rounds", s->rounds},
              {"phase", s->phase},
              {"images", s->images()},
              {"history", s->history()}};
  if (s->phase == "awaiting_answer") {
    out["round"] = t.rounds.size() + 1;
    out["question"] = s->pending_text;
  } else {
    out["round"] = t.rounds.size();
    out["final_guess"] = t.final_guess + 1;
    out["correct"] = t.correct();
  }
  return {200, out};
}

Response GameService::post_answer(const std::string& id, const json& body) {
  auto s = find(id);
  if (!s) return error(404, "unknown or expired session '" + id + "'");
  std::lock_guard slock(s->mu);
  if (s->expired) return error(404, "session expired");
  s->last_used = cfg_.clock();
  if (!body.is_object() || !body.contains("answer") || !body["answer"].is_string())
    return error(400, "body must be {\"answer\": <token>}", {{"vocabulary", answer_vocabulary()}});
  const auto word = body["answer"].get<std::string>();
  auto token = world::parse_answer_token(word);
  if (!token)
    return error(400, "unknown answer token '" + word + "'", {{"vocabulary", answer_vocabulary()}});
  if (s->phase != "awaiting_answer") return error(409, "session is " + s->phase);
  const std::size_t current = s->game->transcripts().front().rounds.size() + 1;
  if (body.contains("round")) {
    // lets clients make retries idempotent
    const auto& rj = body["round"];
    if (!rj.is_number_integer() || rj.get<long long>() != static_cast<long long>(current))
      return error(409, "answer is for round " + body["round"].dump() + ", session is at round " +
                            std::to_string(current));
  }
  ad::Tape::Pause inference;
  s->phase = "awaiting_question";
  s->game->answer({world::Answer{*token}});
  json out = {{"session_id", s->id}, {"round", current}};
  const auto& t = s->game->transcripts().front();
  out["guess"] = t.rounds.back().guess;
  if (current < s->rounds) {
    s->pending_text = s->game->ask().front().text();
    s->phase = "awaiting_answer";
    out["phase"] = s->phase;
    out["next_round"] = current + 1;
    out["question"] = s->pending_text;
    return {200, out};
  }
  s->phase = "finished";
  out["phase"] = s->phase;
  out["final_guess"] = t.final_guess + 1;
  out["correct"] = t.correct();
  {
    std::lock_guard store(store_mu_);
    if (!cfg_.store_dir.empty()) io::append_transcripts(transcript_path(), {t});
    std::lock_guard lock(mu_);
    ++stats_.games;
    auto& m = stats_.per_model[t.model_tag];
    ++m.first;
    if (t.correct()) {
      ++stats_.correct;
      ++m.second;
    }
  }
  return {200, out};
}

Response GameService::stats() {
  std::lock_guard lock(mu_);
  return {200, stats_.to_json()};
}

void GameService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse = [](const httplib::Request& req, json& out) {
    if (req.body.empty()) {
      out = json::object();
      return true;
    }
    try {
      out = json::parse(req.body);
      return true;
    } catch (const json::exception&) {
      return false;
    }
  };
  server.Post("/sessions", [this, send, parse](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!parse(req, body)) return send(res, error(400, "malformed JSON"));
    send(res, create_session(body));
  });
  server.Get(R"(/sessions/([A-Za-z0-9]+))",
             [this, send](const httplib::Request& req, httplib::Response& res) {
               send(res, get_session(req.matches[1]));
             });
  server.Post(R"(/sessions/([A-Za-z0-9]+)/answer)",
              [this, send, parse](const httplib::Request& req, httplib::Response& res) {
                json body;
                if (!parse(req, body)) return send(res, error(400, "malformed JSON"));
                send(res, post_answer(req.matches[1], body));
              });
  server.Get("/stats", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, stats());
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res,
                                      std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    }
    send(res, error(500, what));
  });
  if (cfg_.static_dir) server.set_mount_point("/", cfg_.static_dir->string());
}

}  // namespace dwd::service
