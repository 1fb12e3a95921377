#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "dwd/trainer.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace dwd::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ServiceConfig {
  std::filesystem::path store_dir;  // transcripts.jsonl lives here
  std::optional<std::filesystem::path> static_dir;
  std::chrono::minutes idle_timeout{30};
  std::function<Clock::time_point()> clock = [] { return Clock::now(); };
};

struct Response {
  int status = 200;
  json body;
};

struct Stats {
  std::size_t games = 0;
  std::size_t correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_model;  // games, correct
  json to_json() const;
};

/// Fold over finished transcripts.
Stats fold_stats(const std::vector<game::Transcript>& transcripts);

/// Live games with a human answering. Handlers are transport-independent;
/// mount() wires them to an HTTP server.
class GameService {
 public:
  /// `models` maps a model tag to a loaded checkpoint; the first is the default.
  GameService(std::vector<std::shared_ptr<const train::Model>> models, ServiceConfig cfg);
  ~GameService();

  Response create_session(const json& body);
  Response get_session(const std::string& id);
  Response post_answer(const std::string& id, const json& body);
  Response stats();

  /// Recomputes stats from the transcript store on disk.
  Stats recompute_stats() const;
  std::size_t expire_idle();
  std::size_t live_sessions() const;
  std::filesystem::path transcript_path() const;

  void mount(httplib::Server& server);

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id);
  std::string new_id();

  std::vector<std::shared_ptr<const train::Model>> models_;
  ServiceConfig cfg_;
  mutable std::mutex mu_;  // sessions map and stats cache
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  Stats stats_;
  std::mutex store_mu_;
  std::uint64_t id_counter_ = 0;
  std::uint64_t id_salt_ = 0;
};

}  // namespace dwd::service
