// dwd: data generation, training, evaluation, play and the game service.
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "dwd/config.hpp"
#include "dwd/game_service.hpp"
#include "dwd/manifest.hpp"
#include "dwd/play.hpp"
#include "dwd/report.hpp"
#include "dwd/transcript_io.hpp"
#include "httplib.h"

namespace fs = std::filesystem;
using namespace dwd;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool seed_required) {
  cmd->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override, key=value (repeatable)");
  auto* s = cmd->add_option("--seed", c.seed, "run seed");
  if (seed_required) s->required();
  cmd->add_option("--out", c.out, "artifact root (default $DWD_DATA_DIR or ./runs)");
}

config::Config load_config(const Common& c) {
  config::Config cfg;
  if (!c.config_file.empty()) cfg = config::Config::load(c.config_file);
  cfg.apply_overrides(c.overrides);
  // the seed flag wins over the file
  if (c.seed) cfg.set("data.seed", std::to_string(*c.seed));
  return cfg;
}

fs::path artifact_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("DWD_DATA_DIR"); env && *env) return env;
  return "runs";
}

fs::path make_run_dir(const Common& c, std::uint64_t seed) {
  const fs::path root = artifact_root(c);
  const std::string base = io::run_directory_name(seed);
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

io::Manifest base_manifest(const std::string& command, const config::Config& cfg, std::uint64_t seed) {
  io::Manifest m;
  m.set("command", command);
  m.set("seed", std::to_string(seed));
  for (const auto& [k, v] : cfg.values()) m.set("config." + k, v);
  return m;
}

void finish(io::Manifest& m, const fs::path& dir, const std::vector<std::string>& artifacts) {
  for (const auto& a : artifacts) m.add_artifact(dir, a);
  m.write(dir / "manifest.txt");
  std::cout << dir.string() << "\n";
}

struct Data {
  std::vector<world::Stage1Example> train, val;
};

Data load_data(const config::Config& cfg, std::uint64_t seed, const std::string& data_dir) {
  Data d;
  if (!data_dir.empty()) {
    d.train = world::load_dataset(fs::path(data_dir) / "train.bin");
    d.val = world::load_dataset(fs::path(data_dir) / "val.bin");
    return d;
  }
  const auto wc = config::world_config(cfg);
  RngStream tr(seed, "data/train"), va(seed, "data/val");
  d.train = world::generate_stage1_examples(cfg.get_u64("data.n_train", 10000), wc, tr);
  d.val = world::generate_stage1_examples(cfg.get_u64("data.n_val", 500), wc, va);
  return d;
}

eval::LanguageModel metric_lm(const config::Config& cfg, const Data& d, std::uint64_t seed) {
  std::vector<world::Question> corpus;
  corpus.reserve(d.train.size());
  for (const auto& e : d.train) corpus.push_back(e.question);
  auto lc = config::lm_config(cfg);
  lc.seed = seed;
  std::cerr << "training metric language model on " << corpus.size() << " questions\n";
  return eval::LanguageModel::train(corpus, lc);
}

// name=path or a bare path; the tag falls back to the checkpoint's variant
std::unique_ptr<train::Model> load_model(const std::string& spec) {
  std::string name, path = spec;
  if (auto eq = spec.find('='); eq != std::string::npos) {
    name = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  }
  auto ck = train::Checkpoint::load(path);
  if (name.empty()) {
    auto it = ck.meta.find("variant");
    name = it != ck.meta.end() ? it->second : fs::path(path).stem().string();
  }
  return std::make_unique<train::Model>(std::move(ck), name);
}

std::vector<eval::Setting> pick_grid(const std::string& grid) {
  auto all = eval::default_grid();
  if (grid == "default") return all;
  std::vector<eval::Setting> out;
  std::stringstream ss(grid);
  std::string name;
  while (std::getline(ss, name, ',')) {
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.name == name; });
    if (it == all.end()) throw UsageError("unknown setting '" + name + "'");
    out.push_back(*it);
  }
  if (out.empty()) throw UsageError("empty --grid");
  return out;
}

train::LogSink log_to(std::ofstream& file) {
  return [&file](const train::EpochLog& e) {
    file << e.to_json() << "\n";
    file.flush();
    std::cerr << e.to_json() << "\n";
  };
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

// gen-data

struct GenArgs {
  Common c;
  std::optional<std::size_t> n;
};

int cmd_gen(const GenArgs& a) {
  auto cfg = load_config(a.c);
  if (a.n) cfg.set("data.n_train", std::to_string(*a.n));
  const auto seed = *a.c.seed;
  const auto wc = config::world_config(cfg);
  const auto dir = make_run_dir(a.c, seed);
  RngStream tr(seed, "data/train"), va(seed, "data/val");
  world::build_stage1_dataset(cfg.get_u64("data.n_train", 10000), wc, tr, dir, "train");
  world::build_stage1_dataset(cfg.get_u64("data.n_val", 500), wc, va, dir, "val");
  auto m = base_manifest("gen-data", cfg, seed);
  finish(m, dir, {"train.bin", "train.corpus.txt", "val.bin", "val.corpus.txt"});
  return 0;
}

// train

struct TrainArgs {
  Common c;
  std::string stage = "stage1", variant = "ours_discrete_elbo", init, data;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = load_config(a.c);
  auto tc = config::train_config(cfg);
  auto v = train::parse_variant(a.variant);
  if (!v) throw UsageError("unknown variant '" + a.variant + "'");
  tc.variant = *v;
  const auto seed = *a.c.seed;
  tc.seed = seed;
  const auto dir = make_run_dir(a.c, seed);
  std::ofstream logf(dir / "train_log.jsonl");
  auto log = log_to(logf);
  auto m = base_manifest("train", cfg, seed);
  m.set("stage", a.stage);
  m.set("variant", a.variant);
  std::vector<std::string> artifacts = {"train_log.jsonl"};
  auto save = [&](const train::Checkpoint& ck, const std::string& name) {
    ck.save(dir / name);
    artifacts.push_back(name);
    artifacts.push_back(name + ".meta");
  };

  if (a.stage == "all") {
    const auto d = load_data(cfg, seed, a.data);
    train::Stage1Cache cache;
    auto run = train::run_variant(tc.variant, tc, d.train, d.val, cache, log);
    save(run.stage1, "stage1.ckpt");
    save(run.stage2a, "stage2a.ckpt");
    save(run.stage2b, "checkpoint.ckpt");
  } else if (a.stage == "stage1") {
    tc.stage = train::Stage::kStage1;
    const auto d = load_data(cfg, seed, a.data);
    save(train::stage1_train(tc, d.train, d.val, log).checkpoint, "checkpoint.ckpt");
  } else {
    auto st = train::parse_stage(a.stage);
    if (!st) throw UsageError("--stage must be stage1, stage2a, stage2b or all");
    if (a.init.empty()) throw UsageError("--init is required for " + a.stage);
    tc.stage = *st;
    m.set("init", a.init);
    m.set("init.sha256", ad::sha256_file(a.init));
    auto start = train::prepare_stage2(train::Checkpoint::load(a.init), tc.variant);
    save(train::stage2_train(tc, start, log).checkpoint, "checkpoint.ckpt");
  }
  logf.close();
  finish(m, dir, artifacts);
  return 0;
}

// eval

struct EvalArgs {
  Common c;
  std::vector<std::string> checkpoints;
  std::string grid = "default", data;
  std::optional<std::size_t> pools;
};

int cmd_eval(const EvalArgs& a) {
  auto cfg = load_config(a.c);
  const auto seed = *a.c.seed;
  const auto grid = pick_grid(a.grid);
  const std::size_t n = a.pools ? *a.pools : cfg.get_u64("eval.pools", 2000);
  std::vector<std::unique_ptr<train::Model>> models;
  std::vector<eval::NamedModel> named;
  for (const auto& spec : a.checkpoints) {
    models.push_back(load_model(spec));
    named.push_back({models.back()->tag(), models.back().get()});
  }
  const auto dir = make_run_dir(a.c, seed);
  const auto lm = metric_lm(cfg, load_data(cfg, seed, a.data), seed);
  auto rows = eval::build_report(named, grid, lm, n, seed);

  // transcripts for the first setting only, to keep the file small
  std::vector<game::Transcript> ts;
  const auto pools = eval::setting_pools(grid.front(), n, seed);
  for (const auto& nm : named) {
    auto t = game::rollout(nm.model->player(), pools, grid.front().rounds, seed);
    ts.insert(ts.end(), t.begin(), t.end());
  }
  fs::remove(dir / "transcripts.jsonl");
  io::append_transcripts(dir / "transcripts.jsonl", ts);

  write_text(dir / "metrics.tsv", eval::to_tsv(rows));
  std::cerr << eval::to_text(rows);
  auto m = base_manifest("eval", cfg, seed);
  m.set("eval.pools", std::to_string(n));
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i)
    m.set("checkpoint." + named[i].name, a.checkpoints[i]);
  finish(m, dir, {"metrics.tsv", "transcripts.jsonl"});
  return 0;
}

// report / ablate

struct ReportArgs {
  Common c;
  std::vector<std::string> models;
  std::string grid = "default", data;
  std::optional<std::size_t> pools;
};

int cmd_report(const ReportArgs& a) {
  auto cfg = load_config(a.c);
  const auto seed = *a.c.seed;
  auto tc = config::train_config(cfg);
  tc.seed = seed;
  const auto grid = pick_grid(a.grid);
  const std::size_t n = a.pools ? *a.pools : cfg.get_u64("eval.pools", 2000);
  const auto dir = make_run_dir(a.c, seed);
  const auto d = load_data(cfg, seed, a.data);
  std::vector<std::string> artifacts = {"report.tsv", "report.txt"};

  std::vector<std::unique_ptr<train::Model>> models;
  if (!a.models.empty()) {
    for (const auto& spec : a.models) models.push_back(load_model(spec));
  } else {
    std::ofstream logf(dir / "train_log.jsonl");
    auto log = log_to(logf);
    train::Stage1Cache cache;
    auto zs = train::build_baseline(train::BaselineKind::kZeroShot, tc, d.train, d.val, cache, log);
    auto ty = train::build_baseline(train::BaselineKind::kTypical, tc, d.train, d.val, cache, log);
    auto ours = train::run_variant(train::Variant::kOursDiscreteElbo, tc, d.train, d.val, cache, log);
    zs.save(dir / "zero_shot.ckpt");
    ty.save(dir / "typical_transfer.ckpt");
    ours.stage2b.save(dir / "ours.ckpt");
    for (const auto* name : {"zero_shot.ckpt", "typical_transfer.ckpt", "ours.ckpt"}) {
      artifacts.push_back(name);
      artifacts.push_back(std::string(name) + ".meta");
    }
    artifacts.push_back("train_log.jsonl");
    models.push_back(std::make_unique<train::Model>(std::move(zs), "zero_shot"));
    models.push_back(std::make_unique<train::Model>(std::move(ty), "typical_transfer"));
    models.push_back(std::make_unique<train::Model>(std::move(ours.stage2b), "ours"));
  }
  std::vector<eval::NamedModel> named;
  for (const auto& mdl : models) named.push_back({mdl->tag(), mdl.get()});
  const auto lm = metric_lm(cfg, d, seed);
  auto rows = eval::build_report(named, grid, lm, n, seed);
  write_text(dir / "report.tsv", eval::to_tsv(rows));
  write_text(dir / "report.txt", eval::to_text(rows));
  std::cerr << eval::to_text(rows);
  auto m = base_manifest("report", cfg, seed);
  m.set("eval.pools", std::to_string(n));
  m.set("grid", a.grid);
  finish(m, dir, artifacts);
  return 0;
}

struct AblateArgs {
  Common c;
  std::string grid = "default", data;
  std::optional<std::size_t> pools;
};

int cmd_ablate(const AblateArgs& a) {
  auto cfg = load_config(a.c);
  const auto seed = *a.c.seed;
  auto tc = config::train_config(cfg);
  tc.seed = seed;
  const auto grid = pick_grid(a.grid);
  const std::size_t n = a.pools ? *a.pools : cfg.get_u64("eval.pools", 2000);
  const auto dir = make_run_dir(a.c, seed);
  const auto d = load_data(cfg, seed, a.data);
  const auto lm = metric_lm(cfg, d, seed);
  std::ofstream logf(dir / "train_log.jsonl");
  auto rows = eval::run_ablation_grid(tc, d.train, d.val, lm, grid, n, log_to(logf));
  logf.close();
  write_text(dir / "ablation.tsv", eval::ablation_tsv(rows));
  std::cerr << eval::ablation_tsv(rows);
  auto m = base_manifest("ablate", cfg, seed);
  m.set("eval.pools", std::to_string(n));
  finish(m, dir, {"ablation.tsv", "train_log.jsonl"});
  return 0;
}

// play / serve

struct PlayArgs {
  std::string checkpoint, store;
  std::size_t pool_size = 4, rounds = 5;
  std::optional<std::uint64_t> seed;
};

int cmd_play(const PlayArgs& a) {
  if (a.pool_size != 2 && a.pool_size != 4 && a.pool_size != 9)
    throw UsageError("--pool-size must be 2, 4 or 9");
  if (a.rounds == 0) throw UsageError("--rounds must be positive");
  const std::uint64_t seed = a.seed ? *a.seed : std::random_device{}();
  auto model = load_model(a.checkpoint);
  RngStream pool_rng(seed, "session/pool");
  const auto pool = world::sample_random_pool(a.pool_size, world::WorldConfig{}, pool_rng);
  std::optional<fs::path> store;
  if (!a.store.empty()) {
    fs::create_directories(a.store);
    store = fs::path(a.store) / "transcripts.jsonl";
  }
  std::cout << "seed " << seed << "\n";
  play::run(model->player(), pool, a.rounds, seed, std::cin, std::cout, store);
  return 0;
}

httplib::Server* g_server = nullptr;

struct ServeArgs {
  Common c;
  std::vector<std::string> checkpoints;
  std::string host = "127.0.0.1", store, static_dir;
  int port = 8080;
};

int cmd_serve(const ServeArgs& a) {
  auto cfg = load_config(a.c);
  std::vector<std::shared_ptr<const train::Model>> models;
  for (const auto& spec : a.checkpoints) models.push_back(load_model(spec));
  service::ServiceConfig sc;
  sc.store_dir = a.store.empty() ? artifact_root(a.c) / "service" : fs::path(a.store);
  if (!a.static_dir.empty()) sc.static_dir = a.static_dir;
  sc.idle_timeout = std::chrono::minutes(cfg.get_u64("service.idle_minutes", 30));
  service::GameService svc(std::move(models), sc);
  httplib::Server server;
  svc.mount(server);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "serving on http://" << a.host << ":" << a.port << ", transcripts in "
            << svc.transcript_path().string() << "\n";
  if (!server.listen(a.host, a.port)) {
    std::cerr << "error: cannot listen on " << a.host << ":" << a.port << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete latent question-asking agents on a synthetic guessing game"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "write stage-1 contrast pairs and the question corpus");
  add_common(g, gen.c, true);
  g->add_option("--n", gen.n, "number of training pairs");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train one stage (or the whole curriculum)");
  add_common(t, tr.c, true);
  t->add_option("--stage", tr.stage, "stage1 | stage2a | stage2b | all");
  t->add_option("--variant", tr.variant, "model variant");
  t->add_option("--init", tr.init, "starting checkpoint for stage 2")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "gen-data run directory (default: regenerate from seed)")
      ->check(CLI::ExistingDirectory);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "metrics for checkpoints over a settings grid");
  add_common(e, ev.c, true);
  e->add_option("--checkpoint", ev.checkpoints, "[name=]path (repeatable)")->required();
  e->add_option("--grid", ev.grid, "default or comma-separated setting names");
  e->add_option("--pools", ev.pools, "pools per setting");
  e->add_option("--data", ev.data, "gen-data run directory for the metric LM corpus")
      ->check(CLI::ExistingDirectory);

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "zero-shot / typical / ours table over the grid");
  add_common(r, rp.c, true);
  r->add_option("--model", rp.models, "[name=]path (repeatable); trains the three models if absent");
  r->add_option("--grid", rp.grid, "default or comma-separated setting names");
  r->add_option("--pools", rp.pools, "pools per setting");
  r->add_option("--data", rp.data, "gen-data run directory")->check(CLI::ExistingDirectory);

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "train and evaluate every variant");
  add_common(b, ab.c, true);
  b->add_option("--grid", ab.grid, "default or comma-separated setting names");
  b->add_option("--pools", ab.pools, "pools per setting");
  b->add_option("--data", ab.data, "gen-data run directory")->check(CLI::ExistingDirectory);

  PlayArgs pl;
  auto* p = app.add_subcommand("play", "answer Q-bot's questions in the terminal");
  p->add_option("--checkpoint", pl.checkpoint, "[name=]path")->required();
  p->add_option("--pool-size", pl.pool_size, "2, 4 or 9");
  p->add_option("--rounds", pl.rounds, "number of rounds");
  p->add_option("--seed", pl.seed, "game seed (random if absent)");
  p->add_option("--store", pl.store, "directory for transcripts.jsonl");

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "HTTP game service");
  add_common(s, sv.c, false);
  s->add_option("--checkpoint", sv.checkpoints, "[name=]path (repeatable; first is default)")
      ->required();
  s->add_option("--port", sv.port, "TCP port");
  s->add_option("--host", sv.host, "bind address");
  s->add_option("--store", sv.store, "transcript store directory");
  s->add_option("--static", sv.static_dir, "static files served at /")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*r) return cmd_report(rp);
    if (*b) return cmd_ablate(ab);
    if (*p) return cmd_play(pl);
    if (*s) return cmd_serve(sv);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n" << app.help();
    return 1;
  } catch (const config::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 1;
}
