#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dwd/rng.hpp"
#include "dwd/tensor.hpp"

// Synthetic attribute world standing in for natural images: every image is
// a small set of object slots, every question comes from a fixed grammar and
// a rule-based oracle answers it.
namespace dwd::world {

enum class ObjShape : std::uint8_t { kCircle, kSquare, kTriangle };
enum class Color : std::uint8_t { kRed, kGreen, kBlue, kYellow };
enum class Size : std::uint8_t { kSmall, kLarge };
enum class DomainTag : std::uint8_t { kBase, kShiftedA, kShiftedB };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 4;
inline constexpr std::size_t kNumSizes = 2;
inline constexpr std::size_t kDefaultSlots = 4;
/// one-hot shape[3], one-hot color[4], one-hot size[2], presence[1]
inline constexpr std::size_t kFeatureDim = 10;
inline constexpr std::size_t kMaxQuestionLen = 8;  // including the end token

std::string_view to_string(ObjShape s);
std::string_view to_string(Color c);
std::string_view to_string(Size s);
std::string_view to_string(DomainTag d);
std::optional<DomainTag> parse_domain(std::string_view s);

struct Slot {
  bool present = false;
  ObjShape shape = ObjShape::kCircle;
  Color color = Color::kRed;
  Size size = Size::kSmall;
  bool operator==(const Slot&) const = default;
};

struct WorldImage {
  std::vector<Slot> slots;
  DomainTag domain = DomainTag::kBase;
  bool operator==(const WorldImage&) const = default;
  std::size_t present_count() const;
};

// Question vocabulary. Ids are stable: they are written to dataset files.
enum QToken : std::uint8_t {
  kPad = 0, kEnd, kWhat, kColorWord, kShapeWord, kIs, kThe, kObject, kHow, kMany,
  kThere, kA, kQMark,
  kRed, kGreen, kBlue, kYellow,
  kCircle, kSquare, kTriangle,
  kSmall, kLarge,
  kQuestionVocabSize
};

// Answer vocabulary.
enum AToken : std::uint8_t {
  kAnsRed = 0, kAnsGreen, kAnsBlue, kAnsYellow,
  kAnsCircle, kAnsSquare, kAnsTriangle,
  kAnsZero, kAnsOne, kAnsTwo, kAnsThree, kAnsFour,
  kAnsYes, kAnsNo, kAnsNotRelevant,
  kAnswerVocabSize
};

std::string_view question_token_text(std::size_t id);
std::string_view answer_token_text(std::size_t id);
std::optional<std::size_t> parse_question_token(std::string_view word);
std::optional<std::size_t> parse_answer_token(std::string_view word);

enum class Template : std::uint8_t {
  kColorOfShape = 0,  // what color is the <shape> ?
  kShapeOfColor = 1,  // what shape is the <color> object ?
  kCount = 2,         // how many <attr> ?
  kExists = 3,        // is there a <color> <shape> ?
};
inline constexpr std::size_t kNumTemplates = 4;

struct Question {
  std::vector<std::size_t> tokens;  // ends with kEnd, at most kMaxQuestionLen
  std::optional<int> template_id;
  bool operator==(const Question&) const = default;

  /// Words without the end token, space separated.
  std::string text() const;
  /// Throws std::invalid_argument for unknown words or overlong input.
  static Question from_text(std::string_view text);
};

struct Answer {
  std::size_t token = kAnsNotRelevant;
  bool operator==(const Answer&) const = default;
  bool relevant() const { return token != kAnsNotRelevant; }
};

/// Parsed form of a well-formed question.
struct ParsedQuestion {
  Template kind;
  std::size_t arg0 = 0;  // question-token id of first filler
  std::size_t arg1 = 0;  // second filler (kExists only)
};
std::optional<ParsedQuestion> parse_question(const std::vector<std::size_t>& tokens);
Question make_question(Template kind, std::size_t arg0, std::size_t arg1 = 0);

enum class Sampling : std::uint8_t { kContrast, kRandom };
std::string_view to_string(Sampling s);

struct Pool {
  std::vector<WorldImage> images;
  std::size_t target_index = 0;  // 0-based
  Sampling sampling = Sampling::kRandom;
  bool operator==(const Pool&) const = default;
};

struct Stage1Example {
  Pool pool;  // contrast pool, two images
  Question question;
  std::array<Answer, 2> answers;
  bool operator==(const Stage1Example&) const = default;
};

struct Marginals {
  double present = 0.75;
  std::array<double, kNumShapes> shape{};
  std::array<double, kNumColors> color{};
  std::array<double, kNumSizes> size{};
};
Marginals domain_marginals(DomainTag tag);
/// L1 distance between two domains' concatenated attribute marginals.
double marginal_l1(DomainTag a, DomainTag b);

struct WorldConfig {
  std::size_t b_slots = kDefaultSlots;
  DomainTag domain = DomainTag::kBase;
  std::vector<Template> templates = {Template::kColorOfShape, Template::kShapeOfColor,
                                     Template::kCount, Template::kExists};
  bool force_all_present = false;
};

WorldImage generate_image(const WorldConfig& cfg, RngStream& rng);

/// [B, 10] feature rows; absent slots are all zero.
ad::Tensor render_features(const WorldImage& image);
/// Appends the image's B*10 features to `out`.
void append_features(const WorldImage& image, std::vector<double>& out);

Answer ask_oracle(const WorldImage& image, const std::vector<std::size_t>& tokens);
inline Answer ask_oracle(const WorldImage& image, const Question& q) {
  return ask_oracle(image, q.tokens);
}

/// Uniform random well-formed question from the enabled templates.
Question random_question(const WorldConfig& cfg, RngStream& rng);

inline constexpr std::size_t kContrastAttempts = 10000;
/// Throws std::runtime_error when no contrasting pair is found in 10k tries.
Stage1Example sample_contrast_pair(const WorldConfig& cfg, RngStream& rng);
Pool sample_random_pool(std::size_t pool_size, const WorldConfig& cfg, RngStream& rng);
Pool sample_contrast_pool(const WorldConfig& cfg, RngStream& rng);

/// Length-prefixed binary records ("DWDS" header).
void save_dataset(const std::filesystem::path& path, const std::vector<Stage1Example>& data);
std::vector<Stage1Example> load_dataset(const std::filesystem::path& path);
/// One question per line, tokens separated by spaces, no end token.
void save_corpus(const std::filesystem::path& path, const std::vector<Question>& questions);
std::vector<Question> load_corpus(const std::filesystem::path& path);

struct DatasetFiles {
  std::filesystem::path dataset;
  std::filesystem::path corpus;
};
/// Generates n contrast examples from `rng` and writes <dir>/<stem>.bin and
/// <dir>/<stem>.corpus.txt.
DatasetFiles build_stage1_dataset(std::size_t n, const WorldConfig& cfg, RngStream& rng,
                                  const std::filesystem::path& dir, const std::string& stem);
std::vector<Stage1Example> generate_stage1_examples(std::size_t n, const WorldConfig& cfg,
                                                    RngStream& rng);

}  // namespace dwd::world
