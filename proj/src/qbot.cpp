#include "dwd/qbot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dwd/stochastic.hpp"

namespace dwd::agents {

using ad::Shape;

namespace {

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key,
                       std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  return static_cast<std::size_t>(std::stoull(it->second));
}

// Constant [rows, width] one-hot matrix.
Tensor one_hot(const std::vector<std::size_t>& ids, std::size_t width) {
  std::vector<double> v(ids.size() * width, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) v[i * width + ids[i]] = 1.0;
  return Tensor::from({ids.size(), width}, std::move(v));
}

Tensor column(const std::vector<double>& v) { return Tensor::from({v.size(), 1}, v); }

// h_old + m * (h_new - h_old), row-wise mask m in {0,1}.
Tensor masked_update(const Tensor& h_old, const Tensor& h_new, const Tensor& m) {
  return ad::add(h_old, ad::mul(ad::sub(h_new, h_old), m));
}

// Number of word tokens before the end marker.
std::size_t word_count(const std::vector<std::size_t>& tokens) {
  std::size_t n = 0;
  while (n < tokens.size() && tokens[n] != world::kEnd && tokens[n] != world::kPad) ++n;
  return n;
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_kv() const {
  return {
      {"model.hidden", std::to_string(hidden)},
      {"model.embed", std::to_string(embed)},
      {"model.n_latent", std::to_string(n_latent)},
      {"model.k_categories", std::to_string(k_categories)},
      {"model.latent", latent == LatentKind::kDiscrete ? "discrete" : "continuous"},
      {"model.identity_policy", identity_policy ? "true" : "false"},
      {"model.with_encoder", with_encoder ? "true" : "false"},
      {"model.dropout", std::to_string(dropout)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.hidden = parse_size(kv, "model.hidden", c.hidden);
  c.embed = parse_size(kv, "model.embed", c.embed);
  c.n_latent = parse_size(kv, "model.n_latent", c.n_latent);
  c.k_categories = parse_size(kv, "model.k_categories", c.k_categories);
  if (auto it = kv.find("model.latent"); it != kv.end()) {
    if (it->second == "discrete") c.latent = LatentKind::kDiscrete;
    else if (it->second == "continuous") c.latent = LatentKind::kContinuous;
    else throw std::invalid_argument("model.latent must be discrete or continuous");
  }
  auto flag = [&](const char* key, bool& out) {
    if (auto it = kv.find(key); it != kv.end()) out = it->second == "true" || it->second == "1";
  };
  flag("model.identity_policy", c.identity_policy);
  flag("model.with_encoder", c.with_encoder);
  if (auto it = kv.find("model.dropout"); it != kv.end()) c.dropout = std::stod(it->second);
  return c;
}

PoolBatch PoolBatch::from(const std::vector<const world::Pool*>& pools) {
  if (pools.empty()) throw std::invalid_argument("PoolBatch: no pools");
  PoolBatch b;
  b.games = pools.size();
  b.pool_size = pools.front()->images.size();
  if (b.pool_size == 0) throw std::invalid_argument("PoolBatch: empty pool");
  b.boxes = pools.front()->images.front().slots.size();
  std::vector<double> feats;
  feats.reserve(b.games * b.pool_size * b.boxes * world::kFeatureDim);
  for (const auto* p : pools) {
    if (p->images.size() != b.pool_size) throw std::invalid_argument("PoolBatch: mixed pool sizes");
    for (const auto& img : p->images) {
      if (img.slots.size() != b.boxes) throw std::invalid_argument("PoolBatch: mixed slot counts");
      world::append_features(img, feats);
    }
  }
  b.features = Tensor::from({b.games * b.pool_size * b.boxes, world::kFeatureDim}, std::move(feats));
  return b;
}

PoolBatch PoolBatch::from(const std::vector<world::Pool>& pools) {
  std::vector<const world::Pool*> ptrs;
  for (const auto& p : pools) ptrs.push_back(&p);
  return from(ptrs);
}

QBot::QBot(ad::ParamStore& store, const ModelConfig& cfg, const std::string& prefix,
           RngStream* init)
    : cfg_(cfg) {
  if (cfg.identity_policy && cfg.latent != LatentKind::kContinuous) {
    throw std::invalid_argument("identity policy needs a continuous latent");
  }
  if (cfg.identity_policy && cfg.with_encoder) {
    throw std::invalid_argument("identity policy has no posterior encoder");
  }
  const std::size_t H = cfg.hidden, E = cfg.embed, d = cfg.feature_dim;
  const std::size_t NK = cfg.n_latent * cfg.k_categories;
  nn::Binder root(store, init, prefix);

  nn::Binder emb = root.sub("embed");
  word_emb_ = nn::Embedding::bind(emb.sub("words"), cfg.question_vocab, E);
  answer_emb_ = nn::Embedding::bind(emb.sub("answers"), cfg.answer_vocab, E);
  question_rnn_ = nn::LSTMCell::bind(emb.sub("qrnn"), E, E);
  q0_ = emb.param("q0", {1, E}, 0.5);
  a0_ = emb.param("a0", {1, E}, 0.5);

  nn::Binder ctx = root.sub("ctx");
  f5_ = nn::Linear::bind(ctx.sub("f5"), H + 2 * E, H);
  g_ = nn::WNMlp::bind(ctx.sub("g"), H, H, H, true);
  f1_ = nn::WNMlp::bind(ctx.sub("f1"), d, H, H, true);
  f3_ = nn::WNMlp::bind(ctx.sub("f3"), d, H, H, true);
  f2_ = nn::WNLinear::bind(ctx.sub("f2"), H, 1);
  f4_ = nn::WNLinear::bind(ctx.sub("f4"), H, 1);

  nn::Binder dlg = root.sub("dialog");
  dialog_rnn_ = nn::LSTMCell::bind(dlg.sub("rnn"), d + 2 * E, H);
  w1_ = nn::Linear::bind(dlg.sub("w1"), d + 2 * E, H);
  w2_ = nn::Linear::bind(dlg.sub("w2"), H, H, false);

  nn::Binder pol = root.sub("policy");
  if (!cfg.identity_policy) {
    const std::size_t zw = cfg.latent == LatentKind::kDiscrete ? NK : H;
    wz_ = nn::Linear::bind(pol.sub("wz"), H, zw, false);
    wl_ = nn::Linear::bind(pol.sub("wl"), zw, H);
  }

  nn::Binder spk = root.sub("speaker");
  if (cfg.latent == LatentKind::kDiscrete) latent_dict_ = spk.param("dict", {NK, H}, 0.5);
  speaker_emb_ = nn::Embedding::bind(spk.sub("words"), cfg.question_vocab, E);
  speaker_rnn_ = nn::LSTMCell::bind(spk.sub("rnn"), E, H);
  speaker_out_ = nn::Linear::bind(spk.sub("out"), H, cfg.question_vocab);

  nn::Binder pred = root.sub("predictor");
  const std::size_t F = 2 * E;
  fact_query_ = nn::WNMlp::bind(pred.sub("fact_query"), H, H, H, true);
  fact_key_ = nn::WNMlp::bind(pred.sub("fact_key"), F, H, H, true);
  fact_score_ = nn::WNLinear::bind(pred.sub("fact_score"), H, 1);
  box_query_ = nn::WNMlp::bind(pred.sub("box_query"), H + F, H, H, true);
  box_key_ = nn::WNMlp::bind(pred.sub("box_key"), d, H, H, true);
  box_score_ = nn::WNLinear::bind(pred.sub("box_score"), H, 1);
  g1_ = nn::WNMlp::bind(pred.sub("g1"), d, H, H, true);
  g2_ = nn::WNMlp::bind(pred.sub("g2"), H + F, H, H, true);
  g3_ = nn::WNMlp::bind(pred.sub("g3"), H, H, 1, false);

  has_encoder_ = cfg.with_encoder;
  if (has_encoder_) {
    nn::Binder enc = root.sub("encoder");
    enc_g_ = nn::WNMlp::bind(enc.sub("g"), E, H, H, true);
    enc_f1_ = nn::WNMlp::bind(enc.sub("f1"), d, H, H, true);
    enc_f3_ = nn::WNMlp::bind(enc.sub("f3"), d, H, H, true);
    enc_f2_ = nn::WNLinear::bind(enc.sub("f2"), H, 1);
    enc_f4_ = nn::WNLinear::bind(enc.sub("f4"), H, 1);
    enc_wz_ = nn::Linear::bind(enc.sub("wz"), d + E, H);
    if (cfg.latent == LatentKind::kContinuous) {
      enc_logvar_ = nn::Linear::bind(enc.sub("logvar"), H, H);
    }
  }
}

std::size_t QBot::latent_width() const {
  return cfg_.latent == LatentKind::kDiscrete ? cfg_.n_latent * cfg_.k_categories : cfg_.hidden;
}

PoolEncoding QBot::encode_pool(const PoolBatch& batch) const {
  PoolEncoding enc;
  enc.batch = batch;
  const std::size_t G = batch.games, P = batch.pool_size, B = batch.boxes;
  enc.ctx_image_keys = f1_(batch.features);
  enc.ctx_box_keys = f3_(batch.features);
  enc.pred_box_keys = box_key_(batch.features);
  enc.game_of_box.resize(G * P * B);
  enc.image_of_box.resize(G * P * B);
  enc.game_of_image.resize(G * P);
  for (std::size_t i = 0; i < G * P * B; ++i) {
    enc.game_of_box[i] = i / (P * B);
    enc.image_of_box[i] = i / B;
  }
  for (std::size_t i = 0; i < G * P; ++i) enc.game_of_image[i] = i / P;
  return enc;
}

DialogState QBot::initial_state(std::size_t games) const {
  DialogState s;
  const std::size_t H = cfg_.hidden;
  s.h = Tensor::zeros({games, H});
  s.h_bar = Tensor::zeros({games, H});
  s.cell = Tensor::zeros({games, H});
  std::vector<std::size_t> zeros(games, 0);
  s.last_q = ad::index_select(q0_, zeros);
  s.last_a = ad::index_select(a0_, zeros);
  s.fact_embeddings.push_back(ad::concat({s.last_q, s.last_a}, 1));
  s.facts.resize(games);
  return s;
}

Tensor QBot::encode_question(const std::vector<std::vector<std::size_t>>& tokens) const {
  const std::size_t G = tokens.size(), E = cfg_.embed;
  std::vector<std::size_t> lengths(G);
  std::size_t steps = 0;
  for (std::size_t g = 0; g < G; ++g) {
    lengths[g] = word_count(tokens[g]);
    steps = std::max(steps, lengths[g]);
  }
  nn::LSTMState st{Tensor::zeros({G, E}), Tensor::zeros({G, E})};
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> ids(G, world::kPad);
    std::vector<double> m(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      if (t < lengths[g]) {
        ids[g] = tokens[g][t];
        m[g] = 1.0;
      }
    }
    nn::LSTMState nx = question_rnn_.step(word_emb_(ids), st);
    Tensor mask = column(m);
    st = {masked_update(st.h, nx.h, mask), masked_update(st.c, nx.c, mask)};
  }
  return st.h;
}

Tensor QBot::encode_soft_question(const SpeakerOutput& relaxed) const {
  const std::size_t G = relaxed.tokens.size(), E = cfg_.embed;
  if (relaxed.soft_tokens.empty()) throw std::invalid_argument("encode_soft_question: no soft tokens");
  std::vector<std::size_t> lengths(G);
  for (std::size_t g = 0; g < G; ++g) lengths[g] = word_count(relaxed.tokens[g]);
  nn::LSTMState st{Tensor::zeros({G, E}), Tensor::zeros({G, E})};
  for (std::size_t t = 0; t < relaxed.soft_tokens.size(); ++t) {
    std::vector<double> m(G, 0.0);
    bool any = false;
    for (std::size_t g = 0; g < G; ++g) {
      if (t < lengths[g]) {
        m[g] = 1.0;
        any = true;
      }
    }
    if (!any) break;
    nn::LSTMState nx = question_rnn_.step(word_emb_.soft(relaxed.soft_tokens[t]), st);
    Tensor mask = column(m);
    st = {masked_update(st.h, nx.h, mask), masked_update(st.c, nx.c, mask)};
  }
  return st.h;
}

Tensor QBot::embed_answers(const std::vector<world::Answer>& answers) const {
  std::vector<std::size_t> ids;
  ids.reserve(answers.size());
  for (const auto& a : answers) ids.push_back(a.token);
  return answer_emb_(ids);
}

namespace {

// Shared hierarchical attention: alpha over images from the box-mean of
// image scores, beta over boxes within each image.
ContextOutput hierarchical_attention(const PoolBatch& batch, const Tensor& query_per_box,
                                     const Tensor& image_keys, const Tensor& box_keys,
                                     const nn::WNLinear& image_score, const nn::WNLinear& box_score) {
  const std::size_t G = batch.games, P = batch.pool_size, B = batch.boxes;
  const std::size_t d = batch.features.dim(1);
  Tensor s_img = image_score(ad::mul(query_per_box, image_keys));  // [G*P*B, 1]
  s_img = ad::mean(ad::reshape(s_img, {G * P, B}), 1);               // [G*P]
  Tensor alpha = ad::softmax(ad::reshape(s_img, {G, P}));
  Tensor s_box = box_score(ad::mul(query_per_box, box_keys));
  Tensor beta = ad::softmax(ad::reshape(s_box, {G * P, B}));
  Tensor w = ad::mul(ad::reshape(alpha, {G * P, 1}), beta);  // [G*P, B]
  Tensor weighted = ad::mul(batch.features, ad::reshape(w, {G * P * B, 1}));
  Tensor v_hat = ad::sum(ad::reshape(weighted, {G, P * B, d}), 1);
  ContextOutput out;
  out.v_hat = v_hat;
  out.alpha = alpha;
  out.beta = beta;
  return out;
}

}  // namespace

ContextOutput QBot::context_encode(const PoolEncoding& pool, const Tensor& h_bar, const Tensor& e_q,
                                   const Tensor& e_a) const {
  Tensor e_c = f5_(ad::concat({h_bar, e_q, e_a}, 1));
  Tensor gq = repeat_rows(g_(e_c), pool.game_of_box);
  ContextOutput out =
      hierarchical_attention(pool.batch, gq, pool.ctx_image_keys, pool.ctx_box_keys, f2_, f4_);
  out.x_context = ad::concat({out.v_hat, e_q, e_a}, 1);
  return out;
}

void QBot::dialog_rnn_step(const Tensor& x_context, DialogState& state, Mode mode,
                           RngStream& rng) const {
  const bool train = mode == Mode::kTrain;
  nn::LSTMState st = dialog_rnn_.step(x_context, {state.h, state.cell});
  Tensor gate = ad::sigmoid(ad::add(w1_(x_context), w2_(state.h)));
  Tensor h_bar = ad::mul(gate, ad::tanh(st.c));
  state.h = ad::dropout(st.h, cfg_.dropout, rng, train);
  state.h_bar = ad::dropout(h_bar, cfg_.dropout, rng, train);
  state.cell = st.c;
}

LatentCode QBot::question_policy(DialogState& state, Mode mode, RngStream& rng,
                                 double temperature) const {
  LatentCode code;
  const std::size_t G = state.h.dim(0);
  if (cfg_.identity_policy) {
    code.logits = state.h;
    code.soft = state.h;
    return code;
  }
  if (cfg_.latent == LatentKind::kContinuous) {
    Tensor mu = (*wz_)(state.h);
    code.logits = mu;
    code.soft = mu;
    state.h = ad::add(state.h, ad::relu((*wl_)(mu)));
    return code;
  }
  const std::size_t N = cfg_.n_latent, K = cfg_.k_categories;
  Tensor l = ad::log_softmax(ad::reshape((*wz_)(state.h), {G * N, K}));
  code.logits = l;
  std::vector<std::size_t> hard;
  if (mode == Mode::kTrain) {
    auto sample = stoch::gumbel_softmax(l, temperature, rng);
    code.soft = sample.soft;
    hard = sample.hard_index;
  } else {
    const auto v = l.data();
    hard.resize(G * N);
    for (std::size_t r = 0; r < G * N; ++r) hard[r] = stoch::argmax(v.subspan(r * K, K));
    code.soft = one_hot(hard, K);
  }
  code.indices.assign(G, std::vector<std::size_t>(N));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t n = 0; n < N; ++n) code.indices[g][n] = hard[g * N + n];
  state.h = ad::add(state.h, ad::relu((*wl_)(ad::reshape(l, {G, N * K}))));
  return code;
}

Tensor QBot::speaker_input(const LatentCode& code, bool use_soft) const {
  if (cfg_.latent == LatentKind::kContinuous) return code.soft;
  const std::size_t N = cfg_.n_latent, K = cfg_.k_categories;
  const std::size_t G = code.indices.empty() ? code.soft.dim(0) / N : code.indices.size();
  Tensor sel;
  if (use_soft) {
    sel = code.soft;
  } else {
    std::vector<std::size_t> flat;
    for (const auto& row : code.indices) flat.insert(flat.end(), row.begin(), row.end());
    sel = one_hot(flat, K);
  }
  // Summing the N selected dictionary rows is one matmul with the flattened code.
  return ad::matmul(ad::reshape(sel, {G, N * K}), latent_dict_);
}

SpeakerOutput QBot::speak(const Tensor& speaker_init, DecodeMode mode, RngStream* rng,
                          double temperature) const {
  const std::size_t G = speaker_init.dim(0), V = cfg_.question_vocab, T = cfg_.max_question_len;
  const bool relaxed = mode != DecodeMode::kGreedy;
  if (relaxed && !rng) throw std::invalid_argument("speak: relaxed decoding needs rng");
  SpeakerOutput out;
  out.tokens.assign(G, {});
  out.token_log_probs.assign(G, {});
  std::vector<bool> done(G, false);
  nn::LSTMState st{speaker_init, Tensor::zeros({G, cfg_.hidden})};
  Tensor input = speaker_emb_(std::vector<std::size_t>(G, world::kPad));
  for (std::size_t t = 0; t < T; ++t) {
    st = speaker_rnn_.step(input, st);
    Tensor logits = speaker_out_(st.h);
    Tensor lp = ad::log_softmax(logits);
    const auto lpv = lp.data();
    std::vector<std::size_t> chosen(G, world::kPad);
    Tensor soft;
    if (relaxed) {
      auto sample = stoch::gumbel_softmax(lp, temperature, *rng);
      soft = sample.soft;
      chosen = sample.hard_index;
    } else {
      for (std::size_t g = 0; g < G; ++g) chosen[g] = stoch::argmax(lpv.subspan(g * V, V));
    }
    bool all_done = true;
    for (std::size_t g = 0; g < G; ++g) {
      if (done[g]) continue;
      std::size_t tok = chosen[g];
      if (tok == world::kPad) {
        // pad is never a word; fall back to the best real token
        double best = -INFINITY;
        for (std::size_t v = 0; v < V; ++v)
          if (v != world::kPad && lpv[g * V + v] > best) best = lpv[g * V + v], tok = v;
      }
      if (t + 1 == T) tok = world::kEnd;
      out.tokens[g].push_back(tok);
      out.token_log_probs[g].push_back(lpv[g * V + tok]);
      chosen[g] = tok;
      if (tok == world::kEnd) done[g] = true;
      all_done = all_done && done[g];
    }
    if (relaxed) {
      if (mode == DecodeMode::kStraightThrough)
        soft = ad::add(soft, ad::sub(one_hot(chosen, V), soft).detach());
      out.soft_tokens.push_back(soft);
      input = speaker_emb_.soft(soft);
    } else {
      input = speaker_emb_(chosen);
    }
    if (all_done) break;
  }
  return out;
}

SpeakerOutput QBot::speak_teacher_forced(const Tensor& speaker_init,
                                         const std::vector<std::vector<std::size_t>>& targets) const {
  const std::size_t G = speaker_init.dim(0), V = cfg_.question_vocab;
  if (targets.size() != G) throw std::invalid_argument("speak_teacher_forced: batch mismatch");
  std::size_t steps = 0;
  for (const auto& tg : targets) {
    if (tg.empty() || tg.back() != world::kEnd)
      throw std::invalid_argument("speak_teacher_forced: target must end with the end token");
    if (tg.size() > cfg_.max_question_len)
      throw std::invalid_argument("speak_teacher_forced: target longer than T=" +
                                  std::to_string(cfg_.max_question_len));
    steps = std::max(steps, tg.size());
  }
  SpeakerOutput out;
  out.tokens = targets;
  out.token_log_probs.assign(G, {});
  nn::LSTMState st{speaker_init, Tensor::zeros({G, cfg_.hidden})};
  std::vector<std::size_t> prev(G, world::kPad);
  Tensor total;
  for (std::size_t t = 0; t < steps; ++t) {
    st = speaker_rnn_.step(speaker_emb_(prev), st);
    Tensor lp = ad::log_softmax(speaker_out_(st.h));
    std::vector<std::size_t> tgt(G, world::kPad);
    std::vector<double> m(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      if (t < targets[g].size()) {
        tgt[g] = targets[g][t];
        m[g] = 1.0;
        out.token_log_probs[g].push_back(lp.data()[g * V + tgt[g]]);
      }
    }
    Tensor picked = ad::mul(ad::pick(lp, tgt), Tensor::from({G}, m));
    total = total.defined() ? ad::add(total, picked) : picked;
    prev = tgt;
  }
  out.log_likelihood = total;
  return out;
}

PredictOutput QBot::predict(const PoolEncoding& pool, const DialogState& state, Mode mode,
                            RngStream& rng) const {
  const bool train = mode == Mode::kTrain;
  const std::size_t G = pool.batch.games, P = pool.batch.pool_size, B = pool.batch.boxes;
  const std::size_t d = pool.batch.features.dim(1);
  const std::size_t F = state.fact_embeddings.size(), FD = 2 * cfg_.embed;
  if (P == 0) throw std::invalid_argument("predict: empty pool");

  // Attention over rounds.
  std::vector<Tensor> parts;
  for (const auto& f : state.fact_embeddings) parts.push_back(ad::reshape(f, {G, 1, FD}));
  Tensor facts3 = ad::concat(parts, 1);  // [G, F, FD]
  Tensor fact_keys = fact_key_(ad::reshape(facts3, {G * F, FD}));
  std::vector<std::size_t> game_of_fact(G * F);
  for (std::size_t i = 0; i < G * F; ++i) game_of_fact[i] = i / F;
  Tensor fq = repeat_rows(fact_query_(state.h), game_of_fact);
  Tensor fact_att = ad::softmax(ad::reshape(fact_score_(ad::mul(fq, fact_keys)), {G, F}));
  Tensor e_f = ad::sum(ad::mul(facts3, ad::reshape(fact_att, {G, F, 1})), 1);  // [G, FD]
  Tensor q_y = ad::concat({state.h, e_f}, 1);

  // Attention over bounding boxes.
  Tensor bq = repeat_rows(box_query_(q_y), pool.game_of_box);
  Tensor box_att = ad::softmax(ad::reshape(box_score_(ad::mul(bq, pool.pred_box_keys)), {G * P, B}));
  Tensor feats3 = ad::reshape(pool.batch.features, {G * P, B, d});
  Tensor e_i = ad::sum(ad::mul(feats3, ad::reshape(box_att, {G * P, B, 1})), 1);  // [G*P, d]

  Tensor q_p = repeat_rows(g2_(q_y), pool.game_of_image);
  Tensor l_y = g3_(ad::mul(q_p, g1_(e_i)), cfg_.dropout, &rng, train);  // [G*P, 1]
  l_y = ad::reshape(l_y, {G, P});
  PredictOutput out;
  out.log_probs = ad::log_softmax(l_y);
  out.probs = ad::softmax(l_y);
  out.fact_attention = fact_att;
  out.box_attention = box_att;
  return out;
}

Posterior QBot::encode_posterior(const PoolEncoding& pool,
                                 const std::vector<std::vector<std::size_t>>& question_tokens) const {
  if (!has_encoder_) throw std::logic_error("encode_posterior: model has no encoder");
  const std::size_t G = pool.batch.games;
  Tensor e_q = encode_question(question_tokens);
  Tensor gq = repeat_rows(enc_g_(e_q), pool.game_of_box);
  ContextOutput att = hierarchical_attention(pool.batch, gq, enc_f1_(pool.batch.features),
                                             enc_f3_(pool.batch.features), enc_f2_, enc_f4_);
  Tensor h = enc_wz_(ad::concat({att.v_hat, e_q}, 1));
  Posterior post;
  if (cfg_.latent == LatentKind::kDiscrete) {
    const std::size_t N = cfg_.n_latent, K = cfg_.k_categories;
    post.log_probs = ad::log_softmax(ad::reshape((*wz_)(h), {G * N, K}));
  } else {
    post.mean = (*wz_)(h);
    post.log_var = (*enc_logvar_)(h);
  }
  return post;
}

LatentCode QBot::plan(const PoolEncoding& pool, DialogState& state, Mode mode, RngStream& rng,
                      double temperature) const {
  ContextOutput ctx = context_encode(pool, state.h_bar, state.last_q, state.last_a);
  dialog_rnn_step(ctx.x_context, state, mode, rng);
  return question_policy(state, mode, rng, temperature);
}

void QBot::observe(DialogState& state, const Tensor& e_q, const Tensor& e_a,
                   const std::vector<world::Question>& questions,
                   const std::vector<world::Answer>& answers) const {
  const std::size_t G = state.games();
  if (questions.size() != G || answers.size() != G) throw std::invalid_argument("observe: batch mismatch");
  state.last_q = e_q;
  state.last_a = e_a;
  state.fact_embeddings.push_back(ad::concat({e_q, e_a}, 1));
  for (std::size_t g = 0; g < G; ++g) state.facts[g].emplace_back(questions[g], answers[g]);
  ++state.round;
}

}  // namespace dwd::agents
