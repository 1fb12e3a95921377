// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// `acceptance <substring>` runs only the criteria whose name contains it.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "dwd/metrics.hpp"
#include "dwd/report.hpp"
#include "fd_oracle.hpp"
#include "metric_oracle.hpp"

using namespace dwd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------- cheap ones

Verdict autodiff_fd() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_op;
  std::size_t n = 0;
  for (const auto& c : fd::op_cases()) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      RngStream rng(seed, "fd/" + c.name);
      auto [f, inputs] = c.make(rng);
      const double e = fd::max_rel_error(f, inputs);
      if (e > worst) {
        worst = e;
        worst_op = c.name;
      }
      ++n;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0,
          std::to_string(n) + " op instances, worst rel error " + sci(worst) + " (" + worst_op +
              "), " + fmt(secs, 2) + " s"};
}

double kl_direct(const std::vector<double>& q) {
  double s = 0;
  for (double p : q)
    if (p > 0) s += p * std::log(p * q.size());
  return s;
}

Verdict kl_closed_form() {
  RngStream rng(11, "accept/kl");
  double worst = 0;
  bool bounded = true;
  for (int i = 0; i < 100; ++i) {
    const std::size_t K = 2 + rng.below(9);
    std::vector<double> q(K), logq(K);
    double tot = 0;
    for (auto& p : q) tot += (p = std::pow(rng.uniform(), 3.0));
    for (std::size_t k = 0; k < K; ++k) logq[k] = std::log(q[k] /= tot);
    const double kl = stoch::kl_categorical_uniform(ad::Tensor::from({K}, logq)).item();
    worst = std::max(worst, std::abs(kl - kl_direct(q)));
    bounded = bounded && kl >= 0 && kl <= std::log(double(K)) + 1e-12;
  }
  const double uni = stoch::kl_categorical_uniform(ad::log_softmax(ad::Tensor::zeros({5}))).item();
  return {worst < 1e-9 && bounded && std::abs(uni) < 1e-12,
          "max |closed - direct| " + sci(worst) + ", uniform " + sci(uni) +
              (bounded ? ", all within [0, log K]" : ", BOUND VIOLATED")};
}

Verdict gumbel_statistics() {
  RngStream rng(5, "accept/gumbel");
  const std::size_t K = 4, draws = 10000;
  bool freq_ok = true;
  double worst_z = 0;
  std::size_t blunt = 0, total = 0;
  for (int v = 0; v < 5; ++v) {
    std::vector<double> l(K);
    for (auto& x : l) x = -2 + 4 * rng.uniform();
    auto logits = ad::Tensor::from({K}, l);
    auto p = ad::softmax(logits);
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < draws; ++i) ++counts[stoch::gumbel_softmax(logits, 1.0, rng).hard_index[0]];
    for (std::size_t k = 0; k < K; ++k) {
      const double sigma = std::sqrt(draws * p[k] * (1 - p[k]));
      const double z = std::abs(counts[k] - draws * p[k]) / sigma;
      worst_z = std::max(worst_z, z);
      freq_ok = freq_ok && z <= 3.0;
    }
    for (std::size_t i = 0; i < draws; ++i) {
      auto s = stoch::gumbel_softmax(logits, 0.01, rng);
      blunt += *std::max_element(s.soft.data().begin(), s.soft.data().end()) < 0.99;
      ++total;
    }
  }
  // the second clause is checked as written; see README for why it cannot hold on every draw
  return {freq_ok && blunt == 0,
          "frequencies: worst |z| " + fmt(worst_z, 2) + (freq_ok ? " (ok)" : " (>3)") +
              "; tau=0.01: max(soft) < 0.99 on " + std::to_string(blunt) + "/" + std::to_string(total) +
              " draws (" + fmt(100.0 * blunt / total, 2) + "%)"};
}

double max_row_error(const ad::Tensor& t) {
  const std::size_t cols = t.shape().back();
  double worst = 0;
  for (std::size_t r = 0; r < t.size() / cols; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < cols; ++k) s += t[r * cols + k];
    worst = std::max(worst, std::abs(s - 1));
  }
  return worst;
}

Verdict attention_normalization() {
  ad::Tape::Pause pause;
  double worst_sum = 0, worst_uniform = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ad::ParamStore store;
    RngStream init(seed, "accept/init");
    agents::QBot bot(store, agents::ModelConfig{}, "", &init);
    RngStream rng(seed, "accept/pools");
    for (std::size_t P : {2, 4, 9}) {
      std::vector<world::Pool> pools;
      for (int i = 0; i < 8; ++i) pools.push_back(world::sample_random_pool(P, {}, rng));
      auto enc = bot.encode_pool(agents::PoolBatch::from(pools));
      auto st = bot.initial_state(pools.size());
      auto ctx = bot.context_encode(enc, st.h_bar, st.last_q, st.last_a);
      auto pred = bot.predict(enc, st, agents::Mode::kEval, rng);
      for (const auto* t : {&ctx.alpha, &ctx.beta, &pred.probs, &pred.box_attention, &pred.fact_attention})
        worst_sum = std::max(worst_sum, max_row_error(*t));

      world::Pool same;
      same.images.assign(P, world::generate_image({}, rng));
      auto senc = bot.encode_pool(agents::PoolBatch::from(std::vector<world::Pool>{same}));
      auto sst = bot.initial_state(1);
      auto sctx = bot.context_encode(senc, sst.h_bar, sst.last_q, sst.last_a);
      auto spred = bot.predict(senc, sst, agents::Mode::kEval, rng);
      for (double a : sctx.alpha.data()) worst_uniform = std::max(worst_uniform, std::abs(a - 1.0 / P));
      for (double p : spred.probs.data()) worst_uniform = std::max(worst_uniform, std::abs(p - 1.0 / P));
    }
  }
  return {worst_sum < 1e-6 && worst_uniform < 1e-6,
          "max |sum - 1| " + sci(worst_sum) + ", identical-pool max |x - 1/P| " + sci(worst_uniform)};
}

Verdict metric_oracles() {
  std::size_t checked = 0, mismatched = 0;
  const auto corpora = oracle::hand_corpora();
  for (const auto& c : corpora) {
    auto qs = oracle::to_questions(c);
    for (std::size_t n = 1; n <= 4; ++n) {
      const double expected = oracle::brute_diversity(c, n);
      auto got = eval::diversity(qs, n);
      const bool ok = expected < 0 ? !got.has_value() : (got && *got == expected);
      mismatched += !ok;
      ++checked;
    }
  }
  world::WorldConfig wc;
  RngStream rng(7, "accept/lm-corpus");
  std::vector<world::Question> corpus;
  for (int i = 0; i < 1000; ++i) corpus.push_back(world::random_question(wc, rng));
  eval::LmConfig lc;
  lc.seed = 7;
  auto lm = eval::LanguageModel::train(corpus, lc);
  const double own = lm.perplexity(corpus);
  RngStream rr(8, "accept/random-corpus");
  const double rnd = lm.perplexity(oracle::random_token_corpus(corpus, rr));
  return {mismatched == 0 && corpora.size() == 20 && own < rnd,
          std::to_string(corpora.size()) + " corpora, " + std::to_string(checked - mismatched) + "/" +
              std::to_string(checked) + " diversity values exact; LM perplexity own " + fmt(own, 3) +
              " vs random " + fmt(rnd, 3)};
}

// ------------------------------------------------------------ seeded runs

struct SeedRun {
  std::uint64_t seed = 0;
  train::Checkpoint zero_shot;
  train::VariantRun typical, ours;
  double stage1_seconds = 0;
  std::vector<train::EpochLog> stage1_history;
  std::vector<eval::ReportRow> rows;
};

constexpr std::size_t kPools = 2000;

SeedRun run_seed(std::uint64_t seed) {
  std::cerr << "== seed " << seed << ": training zero-shot, typical and ours\n";
  SeedRun r;
  r.seed = seed;
  world::WorldConfig wc;
  RngStream tr(seed, "data/train"), va(seed, "data/val");
  auto train_set = world::generate_stage1_examples(10000, wc, tr);
  auto val_set = world::generate_stage1_examples(500, wc, va);
  train::TrainConfig base;
  base.seed = seed;
  train::Stage1Cache cache;

  // stage 1 of `ours` is timed on its own; zero-shot is that checkpoint verbatim
  train::TrainConfig c1 = base;
  c1.stage = train::Stage::kStage1;
  const auto t0 = Clock::now();
  auto s1 = train::stage1_train(c1, train_set, val_set);
  r.stage1_seconds = seconds_since(t0);
  r.stage1_history = s1.history;
  cache.emplace(train::Pretraining::kDiscreteElbo, std::move(s1.checkpoint));

  r.zero_shot = train::build_baseline(train::BaselineKind::kZeroShot, base, train_set, val_set, cache);
  r.typical = train::run_variant(train::Variant::kTypicalTransfer, base, train_set, val_set, cache);
  r.ours = train::run_variant(train::Variant::kOursDiscreteElbo, base, train_set, val_set, cache);

  std::vector<world::Question> corpus;
  for (const auto& e : train_set) corpus.push_back(e.question);
  eval::LmConfig lc;
  lc.seed = seed;
  auto lm = eval::LanguageModel::train(corpus, lc);

  train::Model zs(r.zero_shot.copy(), "zero_shot"), ty(r.typical.stage2b.copy(), "typical"),
      ou(r.ours.stage2b.copy(), "ours");
  r.rows = eval::build_report({{"zero_shot", &zs}, {"typical", &ty}, {"ours", &ou}}, eval::default_grid(),
                              lm, kPools, seed);
  std::cerr << eval::to_text(r.rows);
  return r;
}

const eval::MetricReport& row(const SeedRun& r, const std::string& setting, const std::string& model) {
  for (const auto& x : r.rows)
    if (x.setting == setting && x.model == model) return x.metrics;
  throw std::runtime_error("missing report row " + setting + "/" + model);
}

std::map<std::uint64_t, SeedRun>& runs() {
  static std::map<std::uint64_t, SeedRun> m;
  return m;
}

const SeedRun& seed_run(std::uint64_t seed) {
  auto it = runs().find(seed);
  if (it == runs().end()) it = runs().emplace(seed, run_seed(seed)).first;
  return it->second;
}

const std::vector<std::uint64_t> kSeeds = {7, 11, 13};
const std::string kTwoRandom = "2-random-5R-base";

Verdict grid_agnosticism() {
  const auto& r = seed_run(7);
  train::Model m(r.ours.stage2b.copy(), "ours");
  std::size_t games = 0;
  try {
    for (std::size_t P : {2, 4, 9})
      for (std::size_t R : {1, 5, 9}) {
        RngStream rng(P * 100 + R, "accept/grid");
        std::vector<world::Pool> pools;
        for (int i = 0; i < 20; ++i) pools.push_back(world::sample_random_pool(P, {}, rng));
        auto ts = game::rollout(m.player(), pools, R, 1);
        for (const auto& t : ts)
          if (t.rounds.size() != R || t.final_guess >= P) return {false, "malformed transcript"};
        games += ts.size();
      }
  } catch (const std::exception& e) {
    return {false, std::string("threw: ") + e.what()};
  }
  return {true, "seed-7 ours checkpoint played " + std::to_string(games) + " games over P{2,4,9} x R{1,5,9}"};
}

Verdict freeze_contracts() {
  const auto& r = seed_run(7);
  auto h1 = train::group_hashes(r.ours.stage1.params);
  auto ha = train::group_hashes(r.ours.stage2a.params);
  auto hb = train::group_hashes(r.ours.stage2b.params);
  std::vector<std::string> problems;
  for (const auto& g : {"ctx.", "embed.", "policy.", "speaker."})
    if (ha.at(g) != h1.at(g)) problems.push_back(std::string("2A moved ") + g);
  if (hb.at("speaker.") != ha.at("speaker.")) problems.push_back("2B moved speaker.");
  for (const auto& g : {"ctx.", "embed.", "dialog.", "policy.", "predictor."})
    if (hb.at(g) == ha.at(g)) problems.push_back(std::string("2B left ") + g + " untouched");
  if (train::frozen_prefixes(train::Stage::kStage2b, train::Variant::kOursDiscreteElbo) !=
      std::vector<std::string>{"speaker."})
    problems.push_back("2B freeze set is not exactly {speaker}");
  const bool typical_moved = r.typical.stage2b.params.hash_prefix("speaker.") !=
                             r.typical.stage1.params.hash_prefix("speaker.");
  if (!typical_moved) problems.push_back("typical speaker unchanged");
  std::string detail = "ours 2A kept {ctx, embed, policy, speaker}; 2B kept only speaker; typical speaker changed";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

Verdict stage1_learning() {
  const auto& r = seed_run(7);
  double first = NAN, last = NAN;
  for (const auto& e : r.stage1_history)
    if (e.split == "train") {
      if (std::isnan(first)) first = e.recon + e.kl;
      last = e.recon + e.kl;
    }
  const double acc = train::stage1_accuracy(r.ours.stage1, [&] {
    RngStream va(7, "data/val");
    return world::generate_stage1_examples(500, {}, va);
  }());
  const bool ok = acc >= 0.90 && last < first && r.stage1_seconds < 15 * 60;
  return {ok, "held-out accuracy " + fmt(acc, 3) + ", ELBO loss epoch 1 " + fmt(first) + " -> final " +
                  fmt(last) + ", " + fmt(r.stage1_seconds / 60, 1) + " min"};
}

Verdict adaptation_gain() {
  std::size_t ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const auto& r = seed_run(s);
    const double gain = row(r, kTwoRandom, "ours").accuracy - row(r, kTwoRandom, "zero_shot").accuracy;
    ok += gain >= 0.10;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(s) + " ours " +
              fmt(row(r, kTwoRandom, "ours").accuracy, 3) + " vs zero-shot " +
              fmt(row(r, kTwoRandom, "zero_shot").accuracy, 3);
  }
  return {ok == kSeeds.size(), detail};
}

Verdict drift_ordering() {
  std::size_t seeds_ok = 0;
  std::string detail;
  for (auto s : kSeeds) {
    const auto& r = seed_run(s);
    std::size_t ppl = 0, div = 0, both = 0;
    for (const auto& st : eval::default_grid()) {
      const auto& o = row(r, st.name, "ours");
      const auto& t = row(r, st.name, "typical");
      const bool p = o.perplexity && t.perplexity && *o.perplexity < *t.perplexity;
      const bool d = o.diversity && t.diversity && *t.diversity > *o.diversity;
      ppl += p;
      div += d;
      both += p && d;
    }
    seeds_ok += both >= 5;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(s) + ": ppl " +
              std::to_string(ppl) + "/6, diversity " + std::to_string(div) + "/6";
  }
  return {seeds_ok >= 2, detail + " (need both in >= 5/6 on 2 of 3 seeds)"};
}

Verdict round_curves() {
  const auto& r = seed_run(7);
  const auto& o = row(r, kTwoRandom, "ours").accuracy_by_round;
  const auto& t = row(r, kTwoRandom, "typical").accuracy_by_round;
  const auto& z = row(r, kTwoRandom, "zero_shot").accuracy_by_round;
  const bool ok = o.back() >= o.front() && t.back() >= t.front() && z[4] <= z[0];
  return {ok, "2-random-5R, " + std::to_string(kPools) + " pools: ours " + fmt(o.front(), 4) + " -> " +
                  fmt(o.back(), 4) + ", typical " + fmt(t.front(), 4) + " -> " + fmt(t.back(), 4) +
                  ", zero-shot (stage 1 only) " + fmt(z.front(), 4) + " -> " + fmt(z[4], 4)};
}

#ifdef DWD_CLI_PATH
int run_cli(const std::string& args, std::string& out) {
  FILE* p = popen((std::string(DWD_CLI_PATH) + " " + args + " 2>/dev/null </dev/null").c_str(), "r");
  if (!p) return -1;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
  const int st = pclose(p);
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}
#endif

Verdict determinism() {
  std::string detail;
  bool ok = true;
#ifdef DWD_CLI_PATH
  const auto root = fs::temp_directory_path() / "dwd_accept_runs";
  fs::remove_all(root);
  const std::string args = "train --seed 9 --stage all --set data.n_train=200 --set data.n_val=50"
                           " --set train.epochs=2 --set train.games_per_epoch=64 --out " +
                           root.string();
  std::string a, b;
  const int ra = run_cli(args, a), rb = run_cli(args, b);
  auto trim = [](std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return fs::path(s.substr(s.rfind('\n') == std::string::npos ? 0 : s.rfind('\n') + 1));
  };
  if (ra != 0 || rb != 0) {
    ok = false;
    detail = "train exited " + std::to_string(ra) + "/" + std::to_string(rb);
  } else {
    bool same = true;
    for (const char* f : {"stage1.ckpt", "stage2a.ckpt", "checkpoint.ckpt"})
      same = same && slurp(trim(a) / f) == slurp(trim(b) / f) && !slurp(trim(a) / f).empty();
    ok = same;
    detail = same ? "two `dwd train --stage all` runs: checkpoints byte-identical"
                  : "checkpoints differ between identical train runs";
  }
  fs::remove_all(root);
#else
  detail = "CLI not built; checkpoint check via library only";
#endif
  train::Model m(train::init_checkpoint(train::Pretraining::kDiscreteElbo, 9), "init");
  auto pools = eval::setting_pools(eval::default_grid()[3], 100, 9);
  const bool same_rollout = game::rollout(m.player(), pools, 9, 4) == game::rollout(m.player(), pools, 9, 4);
  ok = ok && same_rollout;
  detail += same_rollout ? "; repeated rollouts identical" : "; rollouts differ";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"autodiff-fd", autodiff_fd},
      {"kl-closed-form", kl_closed_form},
      {"gumbel-statistics", gumbel_statistics},
      {"attention-normalization", attention_normalization},
      {"metric-oracles", metric_oracles},
      {"determinism", determinism},
      {"stage1-learning", stage1_learning},
      {"grid-agnosticism", grid_agnosticism},
      {"freeze-contracts", freeze_contracts},
      {"round-curves", round_curves},
      {"adaptation-gain", adaptation_gain},
      {"drift-ordering", drift_ordering},
  };
  std::size_t failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name.find(only) == std::string::npos) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << ran - failed << "/" << ran << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
