#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dwd/layers.hpp"
#include "dwd/world.hpp"

namespace dwd::agents {

using ad::Tensor;

enum class LatentKind { kDiscrete, kContinuous };
enum class Mode { kTrain, kEval };

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t n_latent = 8;
  std::size_t k_categories = 4;
  LatentKind latent = LatentKind::kDiscrete;
  /// z = h with no policy parameters (the continuous MLE baseline).
  bool identity_policy = false;
  bool with_encoder = true;
  double dropout = 0.1;
  std::size_t feature_dim = world::kFeatureDim;
  std::size_t question_vocab = world::kQuestionVocabSize;
  std::size_t answer_vocab = world::kAnswerVocabSize;
  std::size_t max_question_len = world::kMaxQuestionLen;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// G pools of equal size P; boxes flattened game-major, image, then box.
struct PoolBatch {
  std::size_t games = 0, pool_size = 0, boxes = 0;
  Tensor features;  // [G*P*B, d]
  static PoolBatch from(const std::vector<const world::Pool*>& pools);
  static PoolBatch from(const std::vector<world::Pool>& pools);
};

/// Pool-dependent projections that stay fixed for a whole game.
struct PoolEncoding {
  PoolBatch batch;
  Tensor ctx_image_keys;  // f1(I)  [G*P*B, H]
  Tensor ctx_box_keys;    // f3(I)  [G*P*B, H]
  Tensor pred_box_keys;   // predictor box-attention keys [G*P*B, H]
  std::vector<std::size_t> game_of_box;    // G*P*B -> g
  std::vector<std::size_t> game_of_image;  // G*P -> g
  std::vector<std::size_t> image_of_box;   // G*P*B -> g*P+p
};

struct ContextOutput {
  Tensor v_hat;      // [G, d]
  Tensor x_context;  // [G, d + 2E]
  Tensor alpha;      // [G, P]
  Tensor beta;       // [G*P, B]
};

/// Batched recurrent state of G concurrent games.
struct DialogState {
  Tensor h, h_bar, cell;  // [G, H]
  Tensor last_q, last_a;  // embeddings of the newest fact (placeholders at round 0)
  std::vector<Tensor> fact_embeddings;  // F_0 (placeholder) .. F_r, each [G, 2E]
  std::vector<std::vector<std::pair<world::Question, world::Answer>>> facts;  // per game, F_1..F_r
  std::size_t round = 0;
  std::size_t games() const { return facts.size(); }
};

struct LatentCode {
  Tensor logits;  // discrete: log-softmax rows [G*N, K]; continuous: mean [G, Z]
  Tensor soft;    // discrete: relaxed sample [G*N, K]; continuous: z [G, Z]
  std::vector<std::vector<std::size_t>> indices;  // discrete: [G][N]
};

struct SpeakerOutput {
  std::vector<std::vector<std::size_t>> tokens;     // per game, ends with kEnd
  std::vector<std::vector<double>> token_log_probs;  // per emitted token
  std::vector<Tensor> soft_tokens;  // per step [G, V] (relaxed decoding only)
  Tensor log_likelihood;            // [G] teacher-forced only
};

struct PredictOutput {
  Tensor probs;      // [G, P]
  Tensor log_probs;  // [G, P]
  Tensor fact_attention;  // [G, F]
  Tensor box_attention;   // [G*P, B]
};

struct Posterior {
  Tensor log_probs;  // discrete [G*N, K]
  Tensor mean, log_var;  // continuous [G, Z]
};

/// Decoding modes of the speaker.
// kStraightThrough: relaxed sample, but the forward value is its hard one-hot.
enum class DecodeMode { kGreedy, kRelaxed, kStraightThrough };

class QBot {
 public:
  /// Binds to the parameters under `prefix` in `store`; with `init`, creates them.
  QBot(ad::ParamStore& store, const ModelConfig& cfg, const std::string& prefix = "",
       RngStream* init = nullptr);

  const ModelConfig& config() const { return cfg_; }
  std::size_t latent_width() const;

  PoolEncoding encode_pool(const PoolBatch& batch) const;
  DialogState initial_state(std::size_t games) const;

  Tensor encode_question(const std::vector<std::vector<std::size_t>>& tokens) const;  // [G, E]
  Tensor encode_soft_question(const SpeakerOutput& relaxed) const;                   // [G, E]
  Tensor embed_answers(const std::vector<world::Answer>& answers) const;             // [G, E]

  ContextOutput context_encode(const PoolEncoding& pool, const Tensor& h_bar, const Tensor& e_q,
                               const Tensor& e_a) const;
  /// Advances (h, cell, h_bar) from x_context. Dropout only in train mode.
  void dialog_rnn_step(const Tensor& x_context, DialogState& state, Mode mode, RngStream& rng) const;
  /// Computes the code from state.h and applies the residual h += relu(W^l l).
  LatentCode question_policy(DialogState& state, Mode mode, RngStream& rng, double temperature) const;
  /// Initial speaker hidden state for a code (e_z for discrete codes).
  Tensor speaker_input(const LatentCode& code, bool use_soft) const;

  SpeakerOutput speak(const Tensor& speaker_init, DecodeMode mode, RngStream* rng = nullptr,
                      double temperature = 1.0) const;
  /// Sum of target-token log-probabilities per game (targets end with kEnd).
  SpeakerOutput speak_teacher_forced(const Tensor& speaker_init,
                                     const std::vector<std::vector<std::size_t>>& targets) const;

  PredictOutput predict(const PoolEncoding& pool, const DialogState& state, Mode mode,
                        RngStream& rng) const;

  Posterior encode_posterior(const PoolEncoding& pool,
                             const std::vector<std::vector<std::size_t>>& question_tokens) const;

  /// Full planner pass: context coder on the newest fact, dialog RNN, policy.
  LatentCode plan(const PoolEncoding& pool, DialogState& state, Mode mode, RngStream& rng,
                  double temperature) const;
  /// Appends round facts (question/answer embeddings) to the state.
  void observe(DialogState& state, const Tensor& e_q, const Tensor& e_a,
               const std::vector<world::Question>& questions,
               const std::vector<world::Answer>& answers) const;

 private:
  Tensor repeat_rows(const Tensor& x, const std::vector<std::size_t>& rows) const {
    return ad::index_select(x, rows);
  }

  ModelConfig cfg_;
  // Question/answer embeddings and placeholders.
  nn::Embedding word_emb_, answer_emb_;
  nn::LSTMCell question_rnn_;
  Tensor q0_, a0_;
  // Context coder.
  nn::Linear f5_;
  nn::WNMlp g_, f1_, f3_;
  nn::WNLinear f2_, f4_;
  // Dialog RNN.
  nn::LSTMCell dialog_rnn_;
  nn::Linear w1_, w2_;
  // Question policy.
  std::optional<nn::Linear> wz_, wl_;
  // Speaker.
  Tensor latent_dict_;  // [N*K, H]
  nn::Embedding speaker_emb_;
  nn::LSTMCell speaker_rnn_;
  nn::Linear speaker_out_;
  // Predictor.
  nn::WNMlp fact_query_, fact_key_, box_query_, box_key_, g1_, g2_, g3_;
  nn::WNLinear fact_score_, box_score_;
  // Encoder.
  bool has_encoder_ = false;
  nn::WNMlp enc_g_, enc_f1_, enc_f3_;
  nn::WNLinear enc_f2_, enc_f4_;
  nn::Linear enc_wz_;
  std::optional<nn::Linear> enc_logvar_;
};

/// Parameter-name prefixes of the Q-bot's modules.
namespace groups {
inline const std::vector<std::string> kContextCoder = {"ctx.", "embed."};
inline const std::string kDialog = "dialog.";
inline const std::string kPolicy = "policy.";
inline const std::string kSpeaker = "speaker.";
inline const std::string kPredictor = "predictor.";
inline const std::string kEncoder = "encoder.";
inline const std::string kZSupplier = "zsupplier.";
}  // namespace groups

}  // namespace dwd::agents
