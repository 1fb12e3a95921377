#include "dwd/report.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dwd::eval {

std::string setting_name(std::size_t P, world::Sampling s, std::size_t R, world::DomainTag d) {
  std::ostringstream os;
  os << P << '-' << world::to_string(s) << '-' << R << "R-" << world::to_string(d);
  return os.str();
}

std::vector<Setting> default_grid() {
  using world::DomainTag;
  using world::Sampling;
  std::vector<Setting> g = {
      {"", 2, Sampling::kContrast, 1, DomainTag::kBase},
      {"", 2, Sampling::kContrast, 5, DomainTag::kBase},
      {"", 2, Sampling::kRandom, 5, DomainTag::kBase},
      {"", 9, Sampling::kRandom, 9, DomainTag::kBase},
      {"", 9, Sampling::kRandom, 9, DomainTag::kShiftedA},
      {"", 9, Sampling::kRandom, 9, DomainTag::kShiftedB},
  };
  for (auto& s : g) s.name = setting_name(s.pool_size, s.sampling, s.rounds, s.domain);
  return g;
}

std::vector<world::Pool> setting_pools(const Setting& s, std::size_t n, std::uint64_t seed) {
  world::WorldConfig wc;
  wc.domain = s.domain;
  RngStream rng(seed, "eval/" + s.name);
  std::vector<world::Pool> pools;
  pools.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (s.sampling == world::Sampling::kContrast) {
      if (s.pool_size != 2) throw std::invalid_argument("contrast pools have exactly two images");
      pools.push_back(world::sample_contrast_pool(wc, rng));
    } else {
      pools.push_back(world::sample_random_pool(s.pool_size, wc, rng));
    }
  }
  return pools;
}

std::vector<ReportRow> build_report(const std::vector<NamedModel>& models,
                                    const std::vector<Setting>& grid, const LanguageModel& lm,
                                    std::size_t pools_per_setting, std::uint64_t seed) {
  for (const auto& m : models)
    if (!m.model) throw std::invalid_argument("report: missing checkpoint for " + m.name);
  std::vector<ReportRow> rows;
  for (const auto& s : grid) {
    auto pools = setting_pools(s, pools_per_setting, seed);
    for (const auto& m : models) {
      auto transcripts = game::rollout(m.model->player(), pools, s.rounds, seed);
      rows.push_back({s.name, m.name, evaluate(transcripts, &lm)});
    }
  }
  return rows;
}

namespace {

std::string cell(const std::optional<double>& v, int precision) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

std::vector<std::vector<std::string>> table(const std::vector<ReportRow>& rows) {
  std::vector<std::vector<std::string>> t;
  t.push_back({"setting", "model", "accuracy", "perplexity", "relevance", "diversity", "div1", "div2",
               "div3", "div4", "acc_round1", "acc_final"});
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    t.push_back({r.setting, r.model, cell(m.accuracy, 4), cell(m.perplexity, 3),
                 cell(m.relevance, 4), cell(m.diversity, 3), cell(m.diversity_n[0], 3),
                 cell(m.diversity_n[1], 3), cell(m.diversity_n[2], 3), cell(m.diversity_n[3], 3),
                 cell(m.accuracy_by_round.empty() ? std::nullopt
                                                  : std::optional<double>(m.accuracy_by_round.front()),
                      4),
                 cell(m.accuracy_by_round.empty() ? std::nullopt
                                                  : std::optional<double>(m.accuracy_by_round.back()),
                      4)});
  }
  return t;
}

std::string join_tsv(const std::vector<std::vector<std::string>>& t) {
  std::ostringstream os;
  for (const auto& row : t) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "\t" : "") << row[i];
    os << '\n';
  }
  return os.str();
}

std::string align(const std::vector<std::vector<std::string>>& t) {
  std::vector<std::size_t> w;
  for (const auto& row : t) {
    w.resize(std::max(w.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], row[i].size());
  }
  std::ostringstream os;
  for (const auto& row : t) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << "  ";
      os << std::left << std::setw(static_cast<int>(w[i])) << row[i];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string to_tsv(const std::vector<ReportRow>& rows) { return join_tsv(table(rows)); }
std::string to_text(const std::vector<ReportRow>& rows) { return align(table(rows)); }

std::vector<AblationRow> run_ablation_grid(const train::TrainConfig& base,
                                           const std::vector<world::Stage1Example>& train,
                                           const std::vector<world::Stage1Example>& val,
                                           const LanguageModel& lm, const std::vector<Setting>& grid,
                                           std::size_t pools_per_setting,
                                           const train::LogSink& log) {
  if (grid.empty()) throw std::invalid_argument("ablation: empty settings grid");
  train::Stage1Cache cache;
  std::vector<AblationRow> out;
  for (auto v : train::kAllVariants) {
    auto run = train::run_variant(v, base, train, val, cache, log);
    train::Model model(std::move(run.stage2b), std::string(train::to_string(v)));
    auto rows = build_report({{std::string(train::to_string(v)), &model}}, grid, lm,
                             pools_per_setting, base.seed);
    AblationRow a{v, {}};
    double ppl = 0.0, div = 0.0;
    int nppl = 0, ndiv = 0;
    for (const auto& r : rows) {
      a.mean.accuracy += r.metrics.accuracy / static_cast<double>(rows.size());
      a.mean.relevance += r.metrics.relevance / static_cast<double>(rows.size());
      if (r.metrics.perplexity) ppl += *r.metrics.perplexity, ++nppl;
      if (r.metrics.diversity) div += *r.metrics.diversity, ++ndiv;
    }
    if (nppl) a.mean.perplexity = ppl / nppl;
    if (ndiv) a.mean.diversity = div / ndiv;
    out.push_back(std::move(a));
  }
  return out;
}

std::string ablation_tsv(const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> t;
  t.push_back({"variant", "accuracy", "perplexity", "relevance", "diversity"});
  for (const auto& r : rows)
    t.push_back({std::string(train::to_string(r.variant)), cell(r.mean.accuracy, 4),
                 cell(r.mean.perplexity, 3), cell(r.mean.relevance, 4), cell(r.mean.diversity, 3)});
  return join_tsv(t);
}

}  // namespace dwd::eval
