#include "dwd/config.hpp"

#include <fstream>
#include <sstream>

namespace dwd::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "world.b_slots",        "world.domain_tag",     "world.templates",
      "data.n_train",         "data.n_val",           "data.seed",
      "train.stage",          "train.variant",        "train.epochs",
      "train.stage1_epochs",  "train.stage2a_epochs", "train.stage2b_epochs",
      "train.lr",             "train.batch",          "train.tau_start",
      "train.tau_end",        "train.dropout",        "train.clip",
      "train.straight_through",
      "train.rounds",         "train.pool_sizes",     "train.games_per_epoch",
      "eval.pools",           "eval.seed",            "eval.batch",
      "lm.epochs",            "lm.hidden",            "lm.embed",
      "lm.lr",                "service.idle_minutes",
  };
  return keys;
}

Config Config::parse(std::string_view text, const std::string& origin) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      c.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    auto v = std::stoull(it->second, &used);
    if (used != it->second.size() || it->second.front() == '-') throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + it->second + "'");
  }
}

std::vector<std::size_t> Config::get_sizes(const std::string& key,
                                           const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad list element '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

world::WorldConfig world_config(const Config& c) {
  world::WorldConfig w;
  w.b_slots = c.get_u64("world.b_slots", w.b_slots);
  if (w.b_slots == 0) throw ConfigError("world.b_slots must be positive");
  auto tag = world::parse_domain(c.get("world.domain_tag", "base"));
  if (!tag) throw ConfigError("world.domain_tag must be base, shifted_a or shifted_b");
  w.domain = *tag;
  if (c.has("world.templates")) {
    w.templates.clear();
    for (auto id : c.get_sizes("world.templates", {})) {
      if (id >= world::kNumTemplates) throw ConfigError("world.templates: unknown template id");
      w.templates.push_back(static_cast<world::Template>(id));
    }
  }
  return w;
}

train::TrainConfig train_config(const Config& c) {
  train::TrainConfig t;
  if (c.has("train.stage")) {
    auto s = train::parse_stage(c.get("train.stage", ""));
    if (!s) throw ConfigError("train.stage must be stage1, stage2a or stage2b");
    t.stage = *s;
  }
  if (c.has("train.variant")) {
    auto v = train::parse_variant(c.get("train.variant", ""));
    if (!v) throw ConfigError("train.variant: unknown variant");
    t.variant = *v;
  }
  t.epochs = c.get_u64("train.epochs", t.epochs);
  t.stage1_epochs = c.get_u64("train.stage1_epochs", t.stage1_epochs);
  t.stage2a_epochs = c.get_u64("train.stage2a_epochs", t.stage2a_epochs);
  t.stage2b_epochs = c.get_u64("train.stage2b_epochs", t.stage2b_epochs);
  t.lr = c.get_double("train.lr", t.lr);
  t.batch = c.get_u64("train.batch", t.batch);
  t.tau_start = c.get_double("train.tau_start", t.tau_start);
  t.tau_end = c.get_double("train.tau_end", t.tau_end);
  const auto st = c.get_u64("train.straight_through", t.straight_through ? 1 : 0);
  if (st > 1) throw ConfigError("train.straight_through: expected 0 or 1");
  t.straight_through = st == 1;
  t.dropout = c.get_double("train.dropout", t.dropout);
  t.clip = c.get_double("train.clip", t.clip);
  t.rounds = c.get_u64("train.rounds", t.rounds);
  t.pool_sizes = c.get_sizes("train.pool_sizes", t.pool_sizes);
  t.games_per_epoch = c.get_u64("train.games_per_epoch", t.games_per_epoch);
  t.seed = c.get_u64("data.seed", t.seed);
  if (t.batch == 0) throw ConfigError("train.batch must be positive");
  if (t.tau_start <= 0 || t.tau_end <= 0) throw ConfigError("temperatures must be positive");
  if (t.dropout < 0 || t.dropout >= 1) throw ConfigError("train.dropout must be in [0, 1)");
  for (auto p : t.pool_sizes)
    if (p != 2 && p != 4 && p != 9) throw ConfigError("train.pool_sizes: P must be 2, 4 or 9");
  return t;
}

eval::LmConfig lm_config(const Config& c) {
  eval::LmConfig l;
  l.epochs = c.get_u64("lm.epochs", l.epochs);
  l.hidden = c.get_u64("lm.hidden", l.hidden);
  l.embed = c.get_u64("lm.embed", l.embed);
  l.lr = c.get_double("lm.lr", l.lr);
  return l;
}

}  // namespace dwd::config
