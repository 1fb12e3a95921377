#include "dwd/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dwd/ops.hpp"
#include "dwd/stochastic.hpp"
#include "json.hpp"

namespace dwd::train {

using ad::Tensor;
using agents::Mode;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kStage1: return "stage1";
    case Stage::kStage2a: return "stage2a";
    case Stage::kStage2b: return "stage2b";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kOursDiscreteElbo: return "ours_discrete_elbo";
    case Variant::kContinuousElbo: return "continuous_elbo";
    case Variant::kContinuousMle: return "continuous_mle";
    case Variant::kTypicalTransfer: return "typical_transfer";
    case Variant::kParallelSpeaker: return "parallel_speaker";
    case Variant::kFinetunedSpeaker: return "finetuned_speaker";
  }
  return "?";
}

std::string_view to_string(Pretraining p) {
  switch (p) {
    case Pretraining::kDiscreteElbo: return "discrete_elbo";
    case Pretraining::kContinuousElbo: return "continuous_elbo";
    case Pretraining::kContinuousMle: return "continuous_mle";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::kStage1, Stage::kStage2a, Stage::kStage2b})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

Pretraining pretraining_of(Variant v) {
  switch (v) {
    case Variant::kContinuousElbo: return Pretraining::kContinuousElbo;
    case Variant::kContinuousMle:
    case Variant::kTypicalTransfer: return Pretraining::kContinuousMle;
    default: return Pretraining::kDiscreteElbo;
  }
}

agents::ModelConfig model_config_for(Pretraining p) {
  agents::ModelConfig c;
  switch (p) {
    case Pretraining::kDiscreteElbo: break;
    case Pretraining::kContinuousElbo:
      c.latent = agents::LatentKind::kContinuous;
      break;
    case Pretraining::kContinuousMle:
      c.latent = agents::LatentKind::kContinuous;
      c.identity_policy = true;
      c.with_encoder = false;
      break;
  }
  return c;
}

bool fine_tunes_speaker(Variant v) {
  return v == Variant::kTypicalTransfer || v == Variant::kFinetunedSpeaker;
}

std::size_t TrainConfig::resolved_epochs() const {
  if (epochs) return epochs;
  switch (stage) {
    case Stage::kStage1: return stage1_epochs;
    case Stage::kStage2a: return stage2a_epochs;
    case Stage::kStage2b: return stage2b_epochs;
  }
  return 0;
}

std::vector<std::string> frozen_prefixes(Stage s, Variant v) {
  if (s == Stage::kStage1) {
    // h-bar only feeds the next round's context coder, unreachable in a
    // single-round game.
    return {"dialog.w1.", "dialog.w2."};
  }
  if (fine_tunes_speaker(v)) return {};
  std::vector<std::string> out;
  if (s == Stage::kStage2a) {
    out = agents::groups::kContextCoder;
    out.push_back(agents::groups::kPolicy);
  }
  out.push_back(agents::groups::kSpeaker);
  if (v == Variant::kParallelSpeaker) out.push_back(agents::groups::kZSupplier);
  return out;
}

std::set<std::string> freeze_set(const ad::ParamStore& store, Stage s, Variant v) {
  std::set<std::string> out;
  for (const auto& prefix : frozen_prefixes(s, v))
    for (const auto& n : store.names_with_prefix(prefix)) out.insert(n);
  return out;
}

std::map<std::string, std::string> group_hashes(const ad::ParamStore& store) {
  std::map<std::string, std::string> out;
  std::vector<std::string> prefixes = agents::groups::kContextCoder;
  for (const auto& p : {agents::groups::kDialog, agents::groups::kPolicy, agents::groups::kSpeaker,
                        agents::groups::kPredictor, agents::groups::kEncoder,
                        agents::groups::kZSupplier})
    prefixes.push_back(p);
  for (const auto& p : prefixes) out[p] = store.hash_prefix(p);
  return out;
}

namespace {

std::string hash_of(const ad::ParamStore& store, const std::set<std::string>& names) {
  return store.hash([&](const std::string& n) { return names.count(n) != 0; });
}

bool has_prefix(const ad::ParamStore& store, const std::string& prefix) {
  return !store.names_with_prefix(prefix).empty();
}

// Lookup-only binding never mutates the store.
ad::ParamStore& bind_store(const Checkpoint& c) { return const_cast<ad::ParamStore&>(c.params); }

agents::ModelConfig effective_model(const Checkpoint& c) {
  agents::ModelConfig m = c.model;
  m.with_encoder = has_prefix(c.params, agents::groups::kEncoder);
  return m;
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw std::runtime_error(where + ": loss diverged (non-finite value)");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

}  // namespace

std::filesystem::path meta_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".meta";
  return p;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  params.save(path);
  std::ofstream out(meta_path(path), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + meta_path(path).string());
  std::map<std::string, std::string> all = meta;
  for (const auto& [k, v] : model.to_kv()) all[k] = v;
  for (const auto& [k, v] : all) out << k << " = " << v << "\n";
  if (!out) throw std::runtime_error("write failed: " + meta_path(path).string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  Checkpoint c;
  c.params = ad::ParamStore::load(path);
  std::ifstream in(meta_path(path));
  if (!in) throw std::runtime_error("missing checkpoint metadata " + meta_path(path).string());
  std::map<std::string, std::string> model_kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq), v = line.substr(eq + 3);
    if (k.rfind("model.", 0) == 0) model_kv[k] = v;
    else c.meta[k] = v;
  }
  c.model = agents::ModelConfig::from_kv(model_kv);
  return c;
}

std::vector<std::uint8_t> Checkpoint::bytes() const {
  auto out = params.serialize();
  std::map<std::string, std::string> all = meta;
  for (const auto& [k, v] : model.to_kv()) all[k] = v;
  for (const auto& [k, v] : all) {
    std::string line = k + " = " + v + "\n";
    out.insert(out.end(), line.begin(), line.end());
  }
  return out;
}

Checkpoint Checkpoint::copy() const {
  Checkpoint c;
  c.params = params.clone();
  c.model = model;
  c.meta = meta;
  return c;
}

std::string EpochLog::to_json() const {
  nlohmann::json j = {{"stage", stage},   {"epoch", epoch},
                      {"split", split},   {"recon", recon},
                      {"kl", kl},         {"predictor_ce", predictor_ce},
                      {"total", total},   {"accuracy", accuracy}};
  return j.dump();
}

Tensor elbo_loss(const Tensor& recon_loglik, const Tensor& posterior_log_probs) {
  const std::size_t G = recon_loglik.size(), rows = posterior_log_probs.shape().at(0);
  if (G == 0 || rows % G != 0)
    throw ad::ShapeError("elbo_loss", "posterior rows " + std::to_string(rows) +
                         " not a multiple of games " + std::to_string(G));
  Tensor recon = ad::neg(ad::mean_all(recon_loglik));
  Tensor kl = ad::mean_all(stoch::kl_categorical_uniform(posterior_log_probs));
  return ad::add(recon, kl);
}

Checkpoint init_checkpoint(Pretraining p, std::uint64_t seed, double dropout) {
  Checkpoint c;
  c.model = model_config_for(p);
  c.model.dropout = dropout;
  RngStream init(seed, "init/" + std::string(to_string(p)));
  agents::QBot bot(c.params, c.model, "", &init);
  c.meta["stage"] = "init";
  c.meta["pretraining"] = std::string(to_string(p));
  c.meta["seed"] = std::to_string(seed);
  return c;
}

namespace {

struct Stage1Terms {
  Tensor loss;
  double recon = 0, kl = 0, ce = 0;
};

Stage1Terms stage1_step(const agents::QBot& bot, const std::vector<const world::Stage1Example*>& batch,
                        RngStream& rng, double tau) {
  const auto& mc = bot.config();
  const std::size_t G = batch.size();
  std::vector<const world::Pool*> pools;
  std::vector<std::vector<std::size_t>> questions;
  std::vector<world::Question> qs;
  std::vector<world::Answer> answers;
  std::vector<std::size_t> targets;
  for (const auto* ex : batch) {
    pools.push_back(&ex->pool);
    questions.push_back(ex->question.tokens);
    qs.push_back(ex->question);
    answers.push_back(ex->answers.at(ex->pool.target_index));
    targets.push_back(ex->pool.target_index);
  }
  auto enc = bot.encode_pool(agents::PoolBatch::from(pools));
  auto state = bot.initial_state(G);
  agents::LatentCode prior = bot.plan(enc, state, Mode::kTrain, rng, tau);

  Tensor speaker_init, kl;
  if (mc.identity_policy) {
    speaker_init = prior.soft;
  } else if (mc.latent == agents::LatentKind::kDiscrete) {
    auto post = bot.encode_posterior(enc, questions);
    auto sample = stoch::gumbel_softmax(post.log_probs, tau, rng);
    agents::LatentCode z;
    z.logits = post.log_probs;
    z.soft = sample.soft;
    speaker_init = bot.speaker_input(z, true);
    kl = ad::mean_all(stoch::kl_categorical_uniform(post.log_probs));
  } else {
    auto post = bot.encode_posterior(enc, questions);
    const std::size_t Z = post.mean.dim(1);
    std::vector<double> eps(G * Z);
    for (auto& e : eps) e = rng.normal();
    Tensor sd = ad::exp(ad::scale(post.log_var, 0.5));
    speaker_init = ad::add(post.mean, ad::mul(sd, Tensor::from({G, Z}, std::move(eps))));
    Tensor terms = ad::sub(ad::add(ad::square(post.mean), ad::exp(post.log_var)), post.log_var);
    kl = ad::scale(ad::mean_all(ad::add_scalar(terms, -1.0)), 0.5);
  }
  auto spoken = bot.speak_teacher_forced(speaker_init, questions);
  Tensor recon = ad::neg(ad::mean_all(spoken.log_likelihood));

  bot.observe(state, bot.encode_question(questions), bot.embed_answers(answers), qs, answers);
  auto pred = bot.predict(enc, state, Mode::kTrain, rng);
  Tensor ce = ad::neg(ad::mean_all(ad::pick(pred.log_probs, targets)));

  Stage1Terms t;
  t.loss = ad::add(recon, ce);
  if (kl.defined()) {
    t.loss = ad::add(t.loss, kl);
    t.kl = kl.item();
  }
  t.recon = recon.item();
  t.ce = ce.item();
  return t;
}

std::vector<std::vector<const world::Stage1Example*>> chunks(
    const std::vector<world::Stage1Example>& data, std::size_t size) {
  std::vector<std::vector<const world::Stage1Example*>> out;
  for (std::size_t i = 0; i < data.size(); i += size) {
    std::vector<const world::Stage1Example*> c;
    for (std::size_t j = i; j < std::min(data.size(), i + size); ++j) c.push_back(&data[j]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TrainResult stage1_train(const TrainConfig& cfg, const std::vector<world::Stage1Example>& train,
                         const std::vector<world::Stage1Example>& val, const LogSink& log) {
  return stage1_train_from(init_checkpoint(pretraining_of(cfg.variant), cfg.seed, cfg.dropout), cfg,
                           train, val, log);
}

TrainResult stage1_train_from(Checkpoint start, const TrainConfig& cfg,
                              const std::vector<world::Stage1Example>& train,
                              const std::vector<world::Stage1Example>& val, const LogSink& log) {
  if (train.empty()) throw std::invalid_argument("stage1_train: empty dataset");
  if (cfg.batch == 0) throw std::invalid_argument("stage1_train: batch must be positive");
  TrainResult res;
  res.checkpoint = std::move(start);
  Checkpoint& ck = res.checkpoint;
  ck.model.dropout = cfg.dropout;
  agents::QBot bot(ck.params, effective_model(ck));
  const auto frozen = freeze_set(ck.params, Stage::kStage1, cfg.variant);
  const std::string frozen_hash = hash_of(ck.params, frozen);
  ad::ParamStore::AdamConfig adam;
  adam.lr = cfg.lr;

  RngStream root(cfg.seed, "stage1");
  RngStream shuffle = root.split("shuffle");
  RngStream noise = root.split("noise");
  const std::size_t epochs = cfg.resolved_epochs();
  const std::size_t steps_per_epoch = (train.size() + cfg.batch - 1) / cfg.batch;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    auto order = permutation(train.size(), shuffle);
    EpochLog e;
    e.stage = "stage1";
    e.epoch = epoch;
    e.split = "train";
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<const world::Stage1Example*> batch;
      for (std::size_t i = b * cfg.batch; i < std::min(train.size(), (b + 1) * cfg.batch); ++i)
        batch.push_back(&train[order[i]]);
      const double tau =
          stoch::annealed_temperature(cfg.tau_start, cfg.tau_end, step, epochs * steps_per_epoch);
      ad::Tape tape;
      Stage1Terms t;
      {
        ad::Tape::Scope scope(tape);
        t = stage1_step(bot, batch, noise, tau);
      }
      check_finite(t.loss.item(), "stage1 epoch " + std::to_string(epoch));
      ad::backward(tape, t.loss);
      ck.params.clip_grad_norm(cfg.clip, frozen);
      ck.params.adam_step(adam, frozen);
      ++step;
      e.recon += t.recon;
      e.kl += t.kl;
      e.predictor_ce += t.ce;
    }
    const double n = static_cast<double>(steps_per_epoch);
    e.recon /= n;
    e.kl /= n;
    e.predictor_ce /= n;
    e.total = e.recon + e.kl + e.predictor_ce;
    e.accuracy = stage1_accuracy(ck, train.size() > 1000 ? std::vector<world::Stage1Example>(
                                                               train.begin(), train.begin() + 1000)
                                                         : train);
    res.history.push_back(e);
    if (log) log(e);
    if (!val.empty()) {
      EpochLog v;
      v.stage = "stage1";
      v.epoch = epoch;
      v.split = "val";
      v.accuracy = stage1_accuracy(ck, val);
      res.history.push_back(v);
      if (log) log(v);
    }
    if (hash_of(ck.params, frozen) != frozen_hash)
      throw std::logic_error("stage1: frozen parameters changed");
  }
  ck.meta["stage"] = "stage1";
  ck.meta["pretraining"] = std::string(to_string(pretraining_of(cfg.variant)));
  ck.meta["variant"] = std::string(to_string(cfg.variant));
  ck.meta["epoch"] = std::to_string(epochs);
  ck.meta["seed"] = std::to_string(cfg.seed);
  if (!res.history.empty()) {
    for (auto it = res.history.rbegin(); it != res.history.rend(); ++it) {
      if (it->split == "train") {
        ck.meta["metric.train_elbo_loss"] = fmt(it->recon + it->kl);
        break;
      }
    }
    if (res.history.back().split == "val") ck.meta["metric.val_accuracy"] = fmt(res.history.back().accuracy);
  }
  return res;
}

double stage1_accuracy(const Checkpoint& ckpt, const std::vector<world::Stage1Example>& data) {
  if (data.empty()) return 0.0;
  ad::Tape::Pause inference;
  agents::QBot bot(bind_store(ckpt), effective_model(ckpt));
  RngStream rng(0, "stage1-eval");
  std::size_t correct = 0;
  for (const auto& batch : chunks(data, 256)) {
    std::vector<const world::Pool*> pools;
    std::vector<std::vector<std::size_t>> questions;
    std::vector<world::Question> qs;
    std::vector<world::Answer> answers;
    for (const auto* ex : batch) {
      pools.push_back(&ex->pool);
      questions.push_back(ex->question.tokens);
      qs.push_back(ex->question);
      answers.push_back(ex->answers.at(ex->pool.target_index));
    }
    auto enc = bot.encode_pool(agents::PoolBatch::from(pools));
    auto state = bot.initial_state(batch.size());
    bot.plan(enc, state, Mode::kEval, rng, 1.0);
    bot.observe(state, bot.encode_question(questions), bot.embed_answers(answers), qs, answers);
    auto pred = bot.predict(enc, state, Mode::kEval, rng);
    const std::size_t P = enc.batch.pool_size;
    for (std::size_t g = 0; g < batch.size(); ++g) {
      auto row = pred.probs.data().subspan(g * P, P);
      if (stoch::argmax(row) == batch[g]->pool.target_index) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double reconstruction_rate(const Checkpoint& ckpt, const std::vector<world::Stage1Example>& data) {
  if (data.empty()) return 0.0;
  ad::Tape::Pause inference;
  const auto mc = effective_model(ckpt);
  if (!mc.with_encoder) throw std::invalid_argument("reconstruction_rate: checkpoint has no encoder");
  agents::QBot bot(bind_store(ckpt), mc);
  double total = 0.0;
  for (const auto& batch : chunks(data, 256)) {
    std::vector<const world::Pool*> pools;
    std::vector<std::vector<std::size_t>> questions;
    for (const auto* ex : batch) {
      pools.push_back(&ex->pool);
      questions.push_back(ex->question.tokens);
    }
    auto enc = bot.encode_pool(agents::PoolBatch::from(pools));
    auto post = bot.encode_posterior(enc, questions);
    agents::LatentCode z;
    if (mc.latent == agents::LatentKind::kDiscrete) {
      const std::size_t N = mc.n_latent, K = mc.k_categories;
      z.indices.assign(batch.size(), std::vector<std::size_t>(N));
      for (std::size_t g = 0; g < batch.size(); ++g)
        for (std::size_t n = 0; n < N; ++n)
          z.indices[g][n] = stoch::argmax(post.log_probs.data().subspan((g * N + n) * K, K));
      z.soft = post.log_probs;
    } else {
      z.soft = post.mean;
    }
    auto spoken = bot.speak(bot.speaker_input(z, false), agents::DecodeMode::kGreedy);
    for (std::size_t g = 0; g < batch.size(); ++g) {
      const auto& gold = questions[g];
      std::size_t hit = 0;
      for (std::size_t t = 0; t < gold.size(); ++t)
        if (t < spoken.tokens[g].size() && spoken.tokens[g][t] == gold[t]) ++hit;
      total += static_cast<double>(hit) / static_cast<double>(gold.size());
    }
  }
  return total / static_cast<double>(data.size());
}

Checkpoint prepare_stage2(const Checkpoint& start, Variant v) {
  Checkpoint c = start.copy();
  // fresh optimizer state for the new stage
  ad::ParamStore fresh;
  c.params.copy_into(fresh, "");
  c.params = std::move(fresh);
  c.params.erase_prefix(agents::groups::kEncoder);
  c.model.with_encoder = false;
  if (v == Variant::kParallelSpeaker && !has_prefix(c.params, agents::groups::kZSupplier)) {
    ad::ParamStore snapshot = c.params.clone();
    snapshot.copy_into(c.params, agents::groups::kZSupplier);
  }
  return c;
}

Model::Model(Checkpoint ckpt, std::string tag) : ckpt_(std::move(ckpt)), tag_(std::move(tag)) {
  const auto mc = effective_model(ckpt_);
  qbot_ = std::make_unique<agents::QBot>(ckpt_.params, mc);
  if (has_prefix(ckpt_.params, agents::groups::kZSupplier)) {
    auto sup = mc;
    sup.with_encoder = has_prefix(ckpt_.params, agents::groups::kZSupplier + agents::groups::kEncoder);
    supplier_ = std::make_unique<agents::QBot>(ckpt_.params, sup, agents::groups::kZSupplier);
  }
}

game::Player Model::player() const {
  game::Player p;
  p.qbot = qbot_.get();
  p.z_supplier = supplier_.get();
  p.tag = tag_;
  return p;
}

TrainResult stage2_train(const TrainConfig& cfg, const Checkpoint& start, const LogSink& log) {
  if (cfg.stage == Stage::kStage1) throw std::invalid_argument("stage2_train: stage must be 2a or 2b");
  if (cfg.pool_sizes.empty() || cfg.batch == 0 || cfg.rounds == 0)
    throw std::invalid_argument("stage2_train: empty game sampler");
  TrainResult res;
  res.checkpoint = prepare_stage2(start, cfg.variant);
  Checkpoint& ck = res.checkpoint;
  ck.model.dropout = cfg.dropout;
  agents::QBot bot(ck.params, effective_model(ck));
  std::unique_ptr<agents::QBot> supplier;
  if (has_prefix(ck.params, agents::groups::kZSupplier)) {
    auto sup = effective_model(ck);
    sup.with_encoder = false;
    supplier = std::make_unique<agents::QBot>(ck.params, sup, agents::groups::kZSupplier);
  }
  game::Player player{&bot, supplier.get(), std::string(to_string(cfg.variant))};
  const auto frozen = freeze_set(ck.params, cfg.stage, cfg.variant);
  const std::string frozen_hash = hash_of(ck.params, frozen);
  ad::ParamStore::AdamConfig adam;
  adam.lr = cfg.lr;

  const std::string stage_name(to_string(cfg.stage));
  RngStream root(cfg.seed, "stage2/" + stage_name);
  RngStream pool_rng = root.split("pools");
  RngStream noise = root.split("noise");
  world::WorldConfig wc;
  wc.domain = cfg.domain;
  const std::size_t epochs = cfg.resolved_epochs();
  const std::size_t batches = (cfg.games_per_epoch + cfg.batch - 1) / cfg.batch;
  game::GameOptions opts;
  opts.mode = Mode::kTrain;
  opts.relaxed_speaker = fine_tunes_speaker(cfg.variant);
  opts.straight_through = cfg.straight_through;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    EpochLog e;
    e.stage = stage_name;
    e.epoch = epoch;
    e.split = "train";
    std::size_t correct = 0, played = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t P = cfg.pool_sizes[step % cfg.pool_sizes.size()];
      std::vector<world::Pool> pools;
      for (std::size_t g = 0; g < cfg.batch; ++g) pools.push_back(world::sample_random_pool(P, wc, pool_rng));
      opts.temperature =
          stoch::annealed_temperature(cfg.tau_start, cfg.tau_end, step, epochs * batches);
      ad::Tape tape;
      Tensor loss;
      std::vector<game::Transcript> transcripts;
      {
        ad::Tape::Scope scope(tape);
        game::BatchGame game(player, pools, opts,
                             noise.split("e" + std::to_string(epoch) + "b" + std::to_string(b)));
        for (std::size_t r = 0; r < cfg.rounds; ++r) {
          const auto& qs = game.ask();
          std::vector<world::Answer> answers;
          for (std::size_t g = 0; g < pools.size(); ++g)
            answers.push_back(world::ask_oracle(pools[g].images[pools[g].target_index], qs[g]));
          game.answer(answers);
          Tensor ce = game.last_cross_entropy();
          loss = loss.defined() ? ad::add(loss, ce) : ce;
        }
        transcripts = game.transcripts();
      }
      check_finite(loss.item(), stage_name + " epoch " + std::to_string(epoch));
      ad::backward(tape, loss);
      ck.params.clip_grad_norm(cfg.clip, frozen);
      ck.params.adam_step(adam, frozen);
      ++step;
      e.predictor_ce += loss.item();
      for (const auto& t : transcripts) correct += t.correct() ? 1 : 0;
      played += transcripts.size();
    }
    e.predictor_ce /= static_cast<double>(batches);
    e.total = e.predictor_ce;
    e.accuracy = static_cast<double>(correct) / static_cast<double>(played);
    res.history.push_back(e);
    if (log) log(e);
    if (hash_of(ck.params, frozen) != frozen_hash)
      throw std::logic_error(stage_name + ": frozen parameters changed");
  }
  ck.meta["stage"] = stage_name;
  ck.meta["variant"] = std::string(to_string(cfg.variant));
  ck.meta["epoch"] = std::to_string(epochs);
  ck.meta["seed"] = std::to_string(cfg.seed);
  if (!res.history.empty()) {
    ck.meta["metric.train_task_loss"] = fmt(res.history.back().predictor_ce);
    ck.meta["metric.train_accuracy"] = fmt(res.history.back().accuracy);
  }
  return res;
}

VariantRun run_variant(Variant v, const TrainConfig& base,
                       const std::vector<world::Stage1Example>& train,
                       const std::vector<world::Stage1Example>& val, Stage1Cache& cache,
                       const LogSink& log) {
  VariantRun run;
  run.variant = v;
  const Pretraining p = pretraining_of(v);
  if (!cache.count(p)) {
    TrainConfig c1 = base;
    c1.stage = Stage::kStage1;
    c1.variant = v;
    c1.epochs = 0;
    auto r1 = stage1_train(c1, train, val, log);
    run.history = r1.history;
    cache.emplace(p, std::move(r1.checkpoint));
  }
  run.stage1 = cache.at(p).copy();

  TrainConfig c2 = base;
  c2.variant = v;
  c2.epochs = 0;
  c2.stage = Stage::kStage2a;
  auto r2a = stage2_train(c2, run.stage1, log);
  run.history.insert(run.history.end(), r2a.history.begin(), r2a.history.end());
  c2.stage = Stage::kStage2b;
  auto r2b = stage2_train(c2, r2a.checkpoint, log);
  run.history.insert(run.history.end(), r2b.history.begin(), r2b.history.end());
  run.stage2a = std::move(r2a.checkpoint);
  run.stage2b = std::move(r2b.checkpoint);
  return run;
}

Checkpoint build_baseline(BaselineKind kind, const TrainConfig& base,
                          const std::vector<world::Stage1Example>& train,
                          const std::vector<world::Stage1Example>& val, Stage1Cache& cache,
                          const LogSink& log) {
  if (kind == BaselineKind::kZeroShot) {
    if (!cache.count(Pretraining::kDiscreteElbo)) {
      TrainConfig c1 = base;
      c1.stage = Stage::kStage1;
      c1.variant = Variant::kOursDiscreteElbo;
      c1.epochs = 0;
      cache.emplace(Pretraining::kDiscreteElbo, stage1_train(c1, train, val, log).checkpoint);
    }
    return cache.at(Pretraining::kDiscreteElbo).copy();
  }
  return run_variant(Variant::kTypicalTransfer, base, train, val, cache, log).stage2b;
}

}  // namespace dwd::train
