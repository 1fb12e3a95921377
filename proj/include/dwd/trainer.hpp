#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dwd/game.hpp"
#include "dwd/param_store.hpp"
#include "dwd/qbot.hpp"
#include "dwd/world.hpp"

namespace dwd::train {

enum class Stage { kStage1, kStage2a, kStage2b };
enum class Variant {
  kOursDiscreteElbo,
  kContinuousElbo,
  kContinuousMle,
  kTypicalTransfer,
  kParallelSpeaker,
  kFinetunedSpeaker,
};
inline const std::vector<Variant> kAllVariants = {
    Variant::kOursDiscreteElbo, Variant::kContinuousElbo,  Variant::kContinuousMle,
    Variant::kTypicalTransfer,  Variant::kParallelSpeaker, Variant::kFinetunedSpeaker};

std::string_view to_string(Stage s);
std::string_view to_string(Variant v);
std::optional<Stage> parse_stage(std::string_view s);
std::optional<Variant> parse_variant(std::string_view s);

/// How a variant is pre-trained in stage 1.
enum class Pretraining { kDiscreteElbo, kContinuousElbo, kContinuousMle };
Pretraining pretraining_of(Variant v);
std::string_view to_string(Pretraining p);
/// Model architecture for a pre-training flavor (with its stage-1 encoder).
agents::ModelConfig model_config_for(Pretraining p);

/// Stage 2 runs the speaker through a per-token relaxation (speaker trained).
bool fine_tunes_speaker(Variant v);

struct TrainConfig {
  Stage stage = Stage::kStage1;
  Variant variant = Variant::kOursDiscreteElbo;
  std::size_t epochs = 0;  // nonzero overrides the per-stage count below
  std::size_t stage1_epochs = 15, stage2a_epochs = 20, stage2b_epochs = 5;
  double lr = 1e-3;
  std::size_t batch = 32;
  double tau_start = 1.0, tau_end = 1.0;
  bool straight_through = false;  // speaker relaxation only
  double dropout = 0.1;
  double clip = 5.0;
  std::uint64_t seed = 7;
  // stage 2 game sampling
  std::size_t rounds = 5;
  std::vector<std::size_t> pool_sizes = {2, 4, 9};
  std::size_t games_per_epoch = 1000;
  world::DomainTag domain = world::DomainTag::kBase;

  std::size_t resolved_epochs() const;
};

/// Parameter-name prefixes frozen for a stage/variant.
std::vector<std::string> frozen_prefixes(Stage s, Variant v);
/// Expands prefixes against the names present in `store`.
std::set<std::string> freeze_set(const ad::ParamStore& store, Stage s, Variant v);

/// Hash of each module group; used to prove freeze contracts.
std::map<std::string, std::string> group_hashes(const ad::ParamStore& store);

struct Checkpoint {
  ad::ParamStore params;
  agents::ModelConfig model;
  std::map<std::string, std::string> meta;  // stage, variant, epoch, seed, metrics

  /// Writes `path` (parameters) and `path`.meta (key = value lines).
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  std::vector<std::uint8_t> bytes() const;
  Checkpoint copy() const;
};

std::filesystem::path meta_path(const std::filesystem::path& checkpoint);

/// One line of the training log.
struct EpochLog {
  std::string stage;
  std::size_t epoch = 0;
  std::string split;
  double recon = 0, kl = 0, predictor_ce = 0, total = 0;
  double accuracy = 0;
  std::string to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
};

/// -loglik + (1/N) sum_n KL(q_n || U(K)), averaged over the batch.
/// `recon_loglik` is [G]; `posterior_log_probs` is [G*N, K].
ad::Tensor elbo_loss(const ad::Tensor& recon_loglik, const ad::Tensor& posterior_log_probs);

using LogSink = std::function<void(const EpochLog&)>;

/// Fresh parameters for a pre-training flavor.
Checkpoint init_checkpoint(Pretraining p, std::uint64_t seed, double dropout = 0.1);

TrainResult stage1_train(const TrainConfig& cfg, const std::vector<world::Stage1Example>& train,
                         const std::vector<world::Stage1Example>& val, const LogSink& log = {});
/// Stage 1 starting from given parameters (tests use hand-set weights).
TrainResult stage1_train_from(Checkpoint start, const TrainConfig& cfg,
                              const std::vector<world::Stage1Example>& train,
                              const std::vector<world::Stage1Example>& val, const LogSink& log = {});

/// Round-1 accuracy with the gold question and answer as the fact.
double stage1_accuracy(const Checkpoint& ckpt, const std::vector<world::Stage1Example>& data);
/// Mean fraction of question tokens recovered by greedy decoding from the
/// argmax posterior code.
double reconstruction_rate(const Checkpoint& ckpt, const std::vector<world::Stage1Example>& data);

/// Strips the stage-1 encoder and, for parallel_speaker, adds the frozen
/// z-supplier copy. Idempotent for stage-2 checkpoints.
Checkpoint prepare_stage2(const Checkpoint& start, Variant v);

/// Stage-2 task training against the oracle A-bot. Throws std::logic_error
/// if a frozen parameter changes.
TrainResult stage2_train(const TrainConfig& cfg, const Checkpoint& start, const LogSink& log = {});

/// A checkpoint bound to live Q-bots.
class Model {
 public:
  explicit Model(Checkpoint ckpt, std::string tag = "");
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const agents::QBot& qbot() const { return *qbot_; }
  game::Player player() const;
  const Checkpoint& checkpoint() const { return ckpt_; }
  const std::string& tag() const { return tag_; }

 private:
  Checkpoint ckpt_;
  std::string tag_;
  std::unique_ptr<agents::QBot> qbot_, supplier_;
};

/// Pre-training flavor -> stage-1 result, for sharing across variants.
using Stage1Cache = std::map<Pretraining, Checkpoint>;

struct VariantRun {
  Variant variant;
  Checkpoint stage1, stage2a, stage2b;
  std::vector<EpochLog> history;
};

/// Full curriculum for one variant: stage 1 (reused from `cache` when
/// present), then stage 2.A and 2.B.
VariantRun run_variant(Variant v, const TrainConfig& base,
                       const std::vector<world::Stage1Example>& train,
                       const std::vector<world::Stage1Example>& val, Stage1Cache& cache,
                       const LogSink& log = {});

enum class BaselineKind { kZeroShot, kTypical };
/// zero_shot: the discrete stage-1 checkpoint verbatim; typical: the
/// typical_transfer curriculum.
Checkpoint build_baseline(BaselineKind kind, const TrainConfig& base,
                          const std::vector<world::Stage1Example>& train,
                          const std::vector<world::Stage1Example>& val, Stage1Cache& cache,
                          const LogSink& log = {});

}  // namespace dwd::train
