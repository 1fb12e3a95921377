#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dwd/config.hpp"
#include "dwd/metrics.hpp"
#include "dwd/report.hpp"
#include "dwd/trainer.hpp"
#include "dwd/transcript_io.hpp"

namespace py = pybind11;
using namespace dwd;
using io::json;

namespace {

// json crosses the boundary as text; the stdlib parser does the rest
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

config::Config make_config(const std::map<std::string, std::string>& overrides) {
  config::Config c;
  for (const auto& [k, v] : overrides) c.set(k, v);
  return c;
}

std::vector<world::Question> questions(const std::vector<std::string>& texts) {
  std::vector<world::Question> qs;
  qs.reserve(texts.size());
  for (const auto& t : texts) qs.push_back(world::Question::from_text(t));
  return qs;
}

std::vector<game::Transcript> transcripts(const py::list& items) {
  std::vector<game::Transcript> ts;
  for (const auto& it : items) ts.push_back(io::transcript_from_json(from_py(it)));
  return ts;
}

struct Data {
  std::vector<world::Stage1Example> train, val;
};

Data make_data(const config::Config& cfg, std::uint64_t seed) {
  const auto wc = config::world_config(cfg);
  RngStream tr(seed, "data/train"), va(seed, "data/val");
  return {world::generate_stage1_examples(cfg.get_u64("data.n_train", 10000), wc, tr),
          world::generate_stage1_examples(cfg.get_u64("data.n_val", 500), wc, va)};
}

train::TrainConfig make_train_config(const config::Config& cfg, const std::string& variant,
                                     std::uint64_t seed) {
  auto tc = config::train_config(cfg);
  auto v = train::parse_variant(variant);
  if (!v) throw std::invalid_argument("unknown variant '" + variant + "'");
  tc.variant = *v;
  tc.seed = seed;
  return tc;
}

py::dict example_to_py(const world::Stage1Example& e) {
  py::dict d;
  d["pool"] = to_py(io::pool_to_json(e.pool));
  d["question"] = e.question.text();
  d["answers"] = py::make_tuple(std::string(world::answer_token_text(e.answers[0].token)),
                                std::string(world::answer_token_text(e.answers[1].token)));
  return d;
}

py::dict report_to_py(const eval::MetricReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["perplexity"] = r.perplexity ? py::cast(*r.perplexity) : py::none();
  d["relevance"] = r.relevance;
  py::list div;
  for (const auto& v : r.diversity_n) div.append(v ? py::cast(*v) : py::none());
  d["diversity_n"] = div;
  d["diversity"] = r.diversity ? py::cast(*r.diversity) : py::none();
  d["accuracy_by_round"] = r.accuracy_by_round;
  return d;
}

class PyModel {
 public:
  PyModel(train::Checkpoint ck, std::string tag) : model_(std::make_unique<train::Model>(std::move(ck), tag)) {}

  const train::Model& get() const { return *model_; }

 private:
  std::unique_ptr<train::Model> model_;
};

}  // namespace

PYBIND11_MODULE(_dwd, m) {
  m.doc() = "Discrete-latent dialog agents on a synthetic shapes world";

  py::register_exception<config::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config", [](const std::map<std::string, std::string>& overrides) {
        return make_config(overrides).dump();
      }, py::arg("overrides") = std::map<std::string, std::string>{},
      "Canonical config text after applying key -> value overrides.");

  m.def("setting_names", [] {
    std::vector<std::string> names;
    for (const auto& s : eval::default_grid()) names.push_back(s.name);
    return names;
  });

  m.def("generate_examples", [](std::size_t n, std::uint64_t seed, const std::string& domain) {
        world::WorldConfig wc;
        auto d = world::parse_domain(domain);
        if (!d) throw std::invalid_argument("unknown domain '" + domain + "'");
        wc.domain = *d;
        RngStream rng(seed, "data/train");
        py::list out;
        for (const auto& e : world::generate_stage1_examples(n, wc, rng)) out.append(example_to_py(e));
        return out;
      }, py::arg("n"), py::arg("seed"), py::arg("domain") = "base");

  m.def("sample_pool", [](std::size_t pool_size, std::uint64_t seed, const std::string& domain) {
        world::WorldConfig wc;
        auto d = world::parse_domain(domain);
        if (!d) throw std::invalid_argument("unknown domain '" + domain + "'");
        wc.domain = *d;
        if (pool_size != 2 && pool_size != 4 && pool_size != 9)
          throw std::invalid_argument("pool size must be 2, 4 or 9");
        RngStream rng(seed, "session/pool");
        return to_py(io::pool_to_json(world::sample_random_pool(pool_size, wc, rng)));
      }, py::arg("pool_size"), py::arg("seed"), py::arg("domain") = "base",
      "Same pool the game service deals for this seed.");

  m.def("setting_pools", [](const std::string& name, std::size_t n, std::uint64_t seed) {
        for (const auto& s : eval::default_grid())
          if (s.name == name) {
            py::list out;
            for (const auto& p : eval::setting_pools(s, n, seed)) out.append(to_py(io::pool_to_json(p)));
            return out;
          }
        throw std::invalid_argument("unknown setting '" + name + "'");
      }, py::arg("setting"), py::arg("n"), py::arg("seed"));

  m.def("oracle_answer", [](const py::object& image, const std::string& question) {
        auto img = io::image_from_json(from_py(image));
        return std::string(world::answer_token_text(world::ask_oracle(img, world::Question::from_text(question)).token));
      }, py::arg("image"), py::arg("question"));

  m.def("diversity", [](const std::vector<std::string>& texts, std::size_t n) {
        return eval::diversity(questions(texts), n);
      }, py::arg("questions"), py::arg("n"));

  py::class_<eval::LanguageModel>(m, "LanguageModel")
      .def_static("train", [](const std::vector<std::string>& corpus, std::size_t epochs, std::uint64_t seed) {
            eval::LmConfig lc;
            lc.epochs = epochs;
            lc.seed = seed;
            py::gil_scoped_release nogil;
            return eval::LanguageModel::train(questions(corpus), lc);
          }, py::arg("corpus"), py::arg("epochs") = 10, py::arg("seed") = 7)
      .def("perplexity", [](const eval::LanguageModel& lm, const std::vector<std::string>& texts) {
        return lm.perplexity(questions(texts));
      });

  py::class_<PyModel>(m, "Model")
      .def_static("init", [](const std::string& pretraining, std::uint64_t seed) {
            for (auto p : {train::Pretraining::kDiscreteElbo, train::Pretraining::kContinuousElbo,
                           train::Pretraining::kContinuousMle})
              if (train::to_string(p) == pretraining) return PyModel(train::init_checkpoint(p, seed), "init");
            throw std::invalid_argument("unknown pre-training '" + pretraining + "'");
          }, py::arg("pretraining") = "discrete_elbo", py::arg("seed") = 7)
      .def_static("load", [](const std::filesystem::path& path, const std::string& tag) {
            return PyModel(train::Checkpoint::load(path), tag);
          }, py::arg("path"), py::arg("tag") = "")
      .def_static("train", [](const std::string& variant, std::uint64_t seed,
                              const std::map<std::string, std::string>& overrides) {
            const auto cfg = make_config(overrides);
            auto tc = make_train_config(cfg, variant, seed);
            py::gil_scoped_release nogil;
            const auto d = make_data(cfg, seed);
            train::Stage1Cache cache;
            auto run = train::run_variant(tc.variant, tc, d.train, d.val, cache);
            return PyModel(std::move(run.stage2b), variant);
          }, py::arg("variant"), py::arg("seed"), py::arg("overrides") = std::map<std::string, std::string>{},
          "Full curriculum (stage 1, 2.A, 2.B) for one variant.")
      .def_static("train_stage1", [](const std::string& variant, std::uint64_t seed,
                                     const std::map<std::string, std::string>& overrides) {
            const auto cfg = make_config(overrides);
            auto tc = make_train_config(cfg, variant, seed);
            tc.stage = train::Stage::kStage1;
            py::gil_scoped_release nogil;
            const auto d = make_data(cfg, seed);
            return PyModel(train::stage1_train(tc, d.train, d.val).checkpoint, "stage1");
          }, py::arg("variant"), py::arg("seed"), py::arg("overrides") = std::map<std::string, std::string>{})
      .def("train_stage2", [](const PyModel& self, const std::string& stage, const std::string& variant,
                              std::uint64_t seed, const std::map<std::string, std::string>& overrides) {
            auto st = train::parse_stage(stage);
            if (!st || *st == train::Stage::kStage1) throw std::invalid_argument("stage must be stage2a or stage2b");
            auto tc = make_train_config(make_config(overrides), variant, seed);
            tc.stage = *st;
            py::gil_scoped_release nogil;
            auto start = train::prepare_stage2(self.get().checkpoint(), tc.variant);
            return PyModel(train::stage2_train(tc, start).checkpoint, variant);
          }, py::arg("stage"), py::arg("variant"), py::arg("seed"),
          py::arg("overrides") = std::map<std::string, std::string>{})
      .def("save", [](const PyModel& self, const std::filesystem::path& path) { self.get().checkpoint().save(path); })
      .def_property_readonly("tag", [](const PyModel& self) { return self.get().tag(); })
      .def_property_readonly("meta", [](const PyModel& self) { return self.get().checkpoint().meta; })
      .def_property_readonly("group_hashes", [](const PyModel& self) {
        return train::group_hashes(self.get().checkpoint().params);
      })
      .def("rollout", [](const PyModel& self, const py::list& pools, std::size_t rounds, std::uint64_t seed) {
            std::vector<world::Pool> ps;
            for (const auto& p : pools) ps.push_back(io::pool_from_json(from_py(p)));
            std::vector<game::Transcript> ts;
            {
              py::gil_scoped_release nogil;
              ts = game::rollout(self.get().player(), ps, rounds, seed);
            }
            py::list out;
            for (const auto& t : ts) out.append(to_py(io::transcript_to_json(t)));
            return out;
          }, py::arg("pools"), py::arg("rounds"), py::arg("seed"));

  m.def("evaluate", [](const py::list& items, const eval::LanguageModel* lm) {
        return report_to_py(eval::evaluate(transcripts(items), lm));
      }, py::arg("transcripts"), py::arg("lm") = nullptr);
}
