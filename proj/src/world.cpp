#include "dwd/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dwd/stochastic.hpp"

namespace dwd::world {

namespace {

constexpr std::array<std::string_view, kQuestionVocabSize> kQuestionWords = {
    "<pad>", "<end>", "what", "color", "shape", "is",     "the",      "object",
    "how",   "many",  "there", "a",    "?",     "red",    "green",    "blue",
    "yellow", "circle", "square", "triangle", "small", "large"};

constexpr std::array<std::string_view, kAnswerVocabSize> kAnswerWords = {
    "red",  "green", "blue", "yellow", "circle", "square", "triangle", "zero",
    "one",  "two",   "three", "four",  "yes",    "no",     "not_relevant"};

bool is_color_token(std::size_t t) { return t >= kRed && t <= kYellow; }
bool is_shape_token(std::size_t t) { return t >= kCircle && t <= kTriangle; }
bool is_size_token(std::size_t t) { return t >= kSmall && t <= kLarge; }

Color token_color(std::size_t t) { return static_cast<Color>(t - kRed); }
ObjShape token_shape(std::size_t t) { return static_cast<ObjShape>(t - kCircle); }
Size token_size(std::size_t t) { return static_cast<Size>(t - kSmall); }

std::size_t color_answer(Color c) { return kAnsRed + static_cast<std::size_t>(c); }
std::size_t shape_answer(ObjShape s) { return kAnsCircle + static_cast<std::size_t>(s); }

template <std::size_t N>
std::size_t draw(const std::array<double, N>& probs, RngStream& rng) {
  return stoch::sample_categorical(probs, rng);
}

}  // namespace

std::string_view to_string(ObjShape s) { return kQuestionWords[kCircle + static_cast<int>(s)]; }
std::string_view to_string(Color c) { return kQuestionWords[kRed + static_cast<int>(c)]; }
std::string_view to_string(Size s) { return kQuestionWords[kSmall + static_cast<int>(s)]; }

std::string_view to_string(DomainTag d) {
  switch (d) {
    case DomainTag::kBase: return "base";
    case DomainTag::kShiftedA: return "shifted_a";
    case DomainTag::kShiftedB: return "shifted_b";
  }
  return "?";
}

std::optional<DomainTag> parse_domain(std::string_view s) {
  if (s == "base") return DomainTag::kBase;
  if (s == "shifted_a") return DomainTag::kShiftedA;
  if (s == "shifted_b") return DomainTag::kShiftedB;
  return std::nullopt;
}

std::string_view to_string(Sampling s) { return s == Sampling::kContrast ? "contrast" : "random"; }

std::size_t WorldImage::present_count() const {
  return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(),
                                                [](const Slot& s) { return s.present; }));
}

std::string_view question_token_text(std::size_t id) {
  return id < kQuestionWords.size() ? kQuestionWords[id] : std::string_view("<unk>");
}

std::string_view answer_token_text(std::size_t id) {
  return id < kAnswerWords.size() ? kAnswerWords[id] : std::string_view("<unk>");
}

std::optional<std::size_t> parse_question_token(std::string_view word) {
  for (std::size_t i = 0; i < kQuestionWords.size(); ++i)
    if (kQuestionWords[i] == word) return i;
  return std::nullopt;
}

std::optional<std::size_t> parse_answer_token(std::string_view word) {
  for (std::size_t i = 0; i < kAnswerWords.size(); ++i)
    if (kAnswerWords[i] == word) return i;
  return std::nullopt;
}

std::string Question::text() const {
  std::string out;
  for (auto t : tokens) {
    if (t == kEnd || t == kPad) break;
    if (!out.empty()) out += ' ';
    out += question_token_text(t);
  }
  return out;
}

Question Question::from_text(std::string_view text) {
  Question q;
  std::istringstream is{std::string(text)};
  std::string word;
  while (is >> word) {
    auto id = parse_question_token(word);
    if (!id || *id == kPad || *id == kEnd) throw std::invalid_argument("unknown question word: " + word);
    q.tokens.push_back(*id);
  }
  if (q.tokens.size() + 1 > kMaxQuestionLen) throw std::invalid_argument("question too long: " + std::string(text));
  q.tokens.push_back(kEnd);
  if (auto p = parse_question(q.tokens)) q.template_id = static_cast<int>(p->kind);
  return q;
}

std::optional<ParsedQuestion> parse_question(const std::vector<std::size_t>& raw) {
  std::vector<std::size_t> t = raw;
  while (!t.empty() && t.back() == kPad) t.pop_back();
  if (t.empty() || t.back() != kEnd) return std::nullopt;
  t.pop_back();
  auto eq = [&](std::initializer_list<std::size_t> pattern) {
    if (t.size() != pattern.size()) return false;
    std::size_t i = 0;
    for (auto p : pattern) {
      if (p != kPad && t[i] != p) return false;  // kPad marks a slot
      ++i;
    }
    return true;
  };
  if (eq({kWhat, kColorWord, kIs, kThe, kPad, kQMark}) && is_shape_token(t[4]))
    return ParsedQuestion{Template::kColorOfShape, t[4], 0};
  if (eq({kWhat, kShapeWord, kIs, kThe, kPad, kObject, kQMark}) && is_color_token(t[4]))
    return ParsedQuestion{Template::kShapeOfColor, t[4], 0};
  if (eq({kHow, kMany, kPad, kQMark}) &&
      (is_color_token(t[2]) || is_shape_token(t[2]) || is_size_token(t[2])))
    return ParsedQuestion{Template::kCount, t[2], 0};
  if (eq({kIs, kThere, kA, kPad, kPad, kQMark}) && is_color_token(t[3]) && is_shape_token(t[4]))
    return ParsedQuestion{Template::kExists, t[3], t[4]};
  return std::nullopt;
}

Question make_question(Template kind, std::size_t arg0, std::size_t arg1) {
  Question q;
  switch (kind) {
    case Template::kColorOfShape: q.tokens = {kWhat, kColorWord, kIs, kThe, arg0, kQMark}; break;
    case Template::kShapeOfColor: q.tokens = {kWhat, kShapeWord, kIs, kThe, arg0, kObject, kQMark}; break;
    case Template::kCount: q.tokens = {kHow, kMany, arg0, kQMark}; break;
    case Template::kExists: q.tokens = {kIs, kThere, kA, arg0, arg1, kQMark}; break;
  }
  q.tokens.push_back(kEnd);
  if (!parse_question(q.tokens)) throw std::invalid_argument("make_question: bad filler");
  q.template_id = static_cast<int>(kind);
  return q;
}

Marginals domain_marginals(DomainTag tag) {
  Marginals m;
  m.shape = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  m.color = {0.25, 0.25, 0.25, 0.25};
  m.size = {0.5, 0.5};
  switch (tag) {
    case DomainTag::kBase: break;
    case DomainTag::kShiftedA:
      m.shape = {0.15, 0.15, 0.70};
      m.color = {0.40, 0.40, 0.10, 0.10};
      break;
    case DomainTag::kShiftedB:
      m.color = {0.10, 0.10, 0.10, 0.70};
      m.size = {0.20, 0.80};
      break;
  }
  return m;
}

double marginal_l1(DomainTag a, DomainTag b) {
  const auto ma = domain_marginals(a), mb = domain_marginals(b);
  double d = 0.0;
  for (std::size_t i = 0; i < kNumShapes; ++i) d += std::abs(ma.shape[i] - mb.shape[i]);
  for (std::size_t i = 0; i < kNumColors; ++i) d += std::abs(ma.color[i] - mb.color[i]);
  for (std::size_t i = 0; i < kNumSizes; ++i) d += std::abs(ma.size[i] - mb.size[i]);
  return d;
}

WorldImage generate_image(const WorldConfig& cfg, RngStream& rng) {
  const auto m = domain_marginals(cfg.domain);
  WorldImage img;
  img.domain = cfg.domain;
  img.slots.resize(cfg.b_slots);
  do {
    for (auto& s : img.slots) {
      s = Slot{};
      s.present = cfg.force_all_present || rng.bernoulli(m.present);
      // Attributes are always drawn so the stream advances identically.
      const auto shape = static_cast<ObjShape>(draw(m.shape, rng));
      const auto color = static_cast<Color>(draw(m.color, rng));
      const auto size = static_cast<Size>(draw(m.size, rng));
      if (s.present) {
        s.shape = shape;
        s.color = color;
        s.size = size;
      }
    }
  } while (img.present_count() == 0);
  return img;
}

void append_features(const WorldImage& image, std::vector<double>& out) {
  for (const auto& s : image.slots) {
    double row[kFeatureDim] = {};
    if (s.present) {
      row[static_cast<int>(s.shape)] = 1.0;
      row[3 + static_cast<int>(s.color)] = 1.0;
      row[7 + static_cast<int>(s.size)] = 1.0;
      row[9] = 1.0;
    }
    out.insert(out.end(), row, row + kFeatureDim);
  }
}

ad::Tensor render_features(const WorldImage& image) {
  std::vector<double> f;
  append_features(image, f);
  return ad::Tensor::from({image.slots.size(), kFeatureDim}, std::move(f));
}

Answer ask_oracle(const WorldImage& image, const std::vector<std::size_t>& tokens) {
  const auto parsed = parse_question(tokens);
  if (!parsed) return Answer{kAnsNotRelevant};
  const auto& p = *parsed;
  switch (p.kind) {
    case Template::kColorOfShape:
      for (const auto& s : image.slots)
        if (s.present && s.shape == token_shape(p.arg0)) return Answer{color_answer(s.color)};
      return Answer{kAnsNotRelevant};
    case Template::kShapeOfColor:
      for (const auto& s : image.slots)
        if (s.present && s.color == token_color(p.arg0)) return Answer{shape_answer(s.shape)};
      return Answer{kAnsNotRelevant};
    case Template::kCount: {
      std::size_t n = 0;
      for (const auto& s : image.slots) {
        if (!s.present) continue;
        if ((is_color_token(p.arg0) && s.color == token_color(p.arg0)) ||
            (is_shape_token(p.arg0) && s.shape == token_shape(p.arg0)) ||
            (is_size_token(p.arg0) && s.size == token_size(p.arg0)))
          ++n;
      }
      return Answer{kAnsZero + std::min<std::size_t>(n, 4)};
    }
    case Template::kExists:
      for (const auto& s : image.slots)
        if (s.present && s.color == token_color(p.arg0) && s.shape == token_shape(p.arg1))
          return Answer{kAnsYes};
      return Answer{kAnsNo};
  }
  return Answer{kAnsNotRelevant};
}

namespace {

Question random_question_of(Template kind, RngStream& rng) {
  switch (kind) {
    case Template::kColorOfShape: return make_question(kind, kCircle + rng.below(kNumShapes));
    case Template::kShapeOfColor: return make_question(kind, kRed + rng.below(kNumColors));
    case Template::kCount: {
      const std::size_t n = kNumColors + kNumShapes + kNumSizes;
      const std::size_t k = rng.below(n);
      const std::size_t tok = k < kNumColors ? kRed + k
                              : k < kNumColors + kNumShapes ? kCircle + (k - kNumColors)
                                                            : kSmall + (k - kNumColors - kNumShapes);
      return make_question(kind, tok);
    }
    case Template::kExists:
      return make_question(kind, kRed + rng.below(kNumColors), kCircle + rng.below(kNumShapes));
  }
  throw std::logic_error("unknown template");
}

}  // namespace

Question random_question(const WorldConfig& cfg, RngStream& rng) {
  if (cfg.templates.empty()) throw std::invalid_argument("world config enables no templates");
  return random_question_of(cfg.templates[rng.below(cfg.templates.size())], rng);
}

Stage1Example sample_contrast_pair(const WorldConfig& cfg, RngStream& rng) {
  if (cfg.templates.empty()) throw std::invalid_argument("world config enables no templates");
  // Template first, then rejection within it, so every template is equally
  // represented regardless of its acceptance rate.
  const Template kind = cfg.templates[rng.below(cfg.templates.size())];
  for (std::size_t attempt = 0; attempt < kContrastAttempts; ++attempt) {
    Question q = random_question_of(kind, rng);
    WorldImage a = generate_image(cfg, rng);
    WorldImage b = generate_image(cfg, rng);
    const Answer aa = ask_oracle(a, q), ab = ask_oracle(b, q);
    if (!aa.relevant() || !ab.relevant() || aa == ab) continue;
    Stage1Example ex;
    ex.pool.images = {std::move(a), std::move(b)};
    ex.pool.sampling = Sampling::kContrast;
    ex.pool.target_index = rng.below(2);
    ex.question = std::move(q);
    ex.answers = {aa, ab};
    return ex;
  }
  throw std::runtime_error("sample_contrast_pair: no contrasting pair after 10000 attempts");
}

Pool sample_random_pool(std::size_t pool_size, const WorldConfig& cfg, RngStream& rng) {
  if (pool_size != 2 && pool_size != 4 && pool_size != 9) {
    throw std::invalid_argument("sample_random_pool: pool size must be 2, 4 or 9, got " +
                                std::to_string(pool_size));
  }
  Pool p;
  p.sampling = Sampling::kRandom;
  for (std::size_t i = 0; i < pool_size; ++i) p.images.push_back(generate_image(cfg, rng));
  p.target_index = rng.below(pool_size);
  return p;
}

Pool sample_contrast_pool(const WorldConfig& cfg, RngStream& rng) {
  return sample_contrast_pair(cfg, rng).pool;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

void put_u8(std::string& out, std::size_t v) {
  if (v > 255) throw std::runtime_error("dataset: field exceeds one byte");
  out.push_back(static_cast<char>(v));
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::string encode_example(const Stage1Example& ex) {
  std::string rec;
  put_u8(rec, ex.pool.images.size());
  put_u8(rec, ex.pool.target_index);
  put_u8(rec, static_cast<std::size_t>(ex.pool.sampling));
  for (const auto& img : ex.pool.images) {
    put_u8(rec, img.slots.size());
    put_u8(rec, static_cast<std::size_t>(img.domain));
    for (const auto& s : img.slots) {
      put_u8(rec, s.present);
      put_u8(rec, static_cast<std::size_t>(s.shape));
      put_u8(rec, static_cast<std::size_t>(s.color));
      put_u8(rec, static_cast<std::size_t>(s.size));
    }
  }
  put_u8(rec, ex.question.tokens.size());
  for (auto t : ex.question.tokens) put_u8(rec, t);
  rec.push_back(static_cast<char>(ex.question.template_id.value_or(-1)));
  put_u8(rec, ex.answers[0].token);
  put_u8(rec, ex.answers[1].token);
  return rec;
}

class ByteCursor {
 public:
  ByteCursor(const std::string& s, std::size_t pos, std::size_t end) : s_(s), pos_(pos), end_(end) {}
  std::uint8_t u8() {
    if (pos_ >= end_) throw std::runtime_error("dataset: truncated record");
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& s_;
  std::size_t pos_, end_;
};

Stage1Example decode_example(ByteCursor& c) {
  Stage1Example ex;
  const std::size_t p = c.u8();
  ex.pool.target_index = c.u8();
  ex.pool.sampling = static_cast<Sampling>(c.u8());
  for (std::size_t i = 0; i < p; ++i) {
    WorldImage img;
    const std::size_t b = c.u8();
    img.domain = static_cast<DomainTag>(c.u8());
    for (std::size_t j = 0; j < b; ++j) {
      Slot s;
      s.present = c.u8() != 0;
      s.shape = static_cast<ObjShape>(c.u8());
      s.color = static_cast<Color>(c.u8());
      s.size = static_cast<Size>(c.u8());
      img.slots.push_back(s);
    }
    ex.pool.images.push_back(std::move(img));
  }
  const std::size_t len = c.u8();
  for (std::size_t i = 0; i < len; ++i) ex.question.tokens.push_back(c.u8());
  const auto tid = static_cast<std::int8_t>(c.u8());
  if (tid >= 0) ex.question.template_id = tid;
  ex.answers[0].token = c.u8();
  ex.answers[1].token = c.u8();
  return ex;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const std::vector<Stage1Example>& data) {
  std::string out = "DWDS";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  for (const auto& ex : data) {
    const std::string rec = encode_example(ex);
    put_u32(out, static_cast<std::uint32_t>(rec.size()));
    out += rec;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Stage1Example> load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  const std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto u32_at = [&](std::size_t pos) {
    if (pos + 4 > s.size()) throw std::runtime_error("dataset: truncated header");
    std::uint32_t v;
    std::memcpy(&v, s.data() + pos, 4);
    return v;
  };
  if (s.size() < 12 || s.compare(0, 4, "DWDS") != 0) throw std::runtime_error("dataset: bad magic");
  if (u32_at(4) != 1) throw std::runtime_error("dataset: unsupported version");
  const std::uint32_t count = u32_at(8);
  std::vector<Stage1Example> out;
  out.reserve(count);
  std::size_t pos = 12;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = u32_at(pos);
    pos += 4;
    if (pos + len > s.size()) throw std::runtime_error("dataset: truncated record");
    ByteCursor c(s, pos, pos + len);
    out.push_back(decode_example(c));
    if (!c.done()) throw std::runtime_error("dataset: record length mismatch");
    pos += len;
  }
  if (pos != s.size()) throw std::runtime_error("dataset: trailing bytes");
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Question>& questions) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const auto& q : questions) f << q.text() << '\n';
}

std::vector<Question> load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<Question> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(Question::from_text(line));
  }
  return out;
}

std::vector<Stage1Example> generate_stage1_examples(std::size_t n, const WorldConfig& cfg,
                                                    RngStream& rng) {
  std::vector<Stage1Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_contrast_pair(cfg, rng));
  return out;
}

DatasetFiles build_stage1_dataset(std::size_t n, const WorldConfig& cfg, RngStream& rng,
                                  const std::filesystem::path& dir, const std::string& stem) {
  if (n == 0) throw std::invalid_argument("build_stage1_dataset: n must be >= 1");
  std::filesystem::create_directories(dir);
  const auto data = generate_stage1_examples(n, cfg, rng);
  DatasetFiles files{dir / (stem + ".bin"), dir / (stem + ".corpus.txt")};
  save_dataset(files.dataset, data);
  std::vector<Question> qs;
  qs.reserve(data.size());
  for (const auto& ex : data) qs.push_back(ex.question);
  save_corpus(files.corpus, qs);
  return files;
}

}  // namespace dwd::world
