#include <filesystem>
#include <fstream>
#include <regex>

#include "doctest.h"
#include "dwd/config.hpp"
#include "dwd/manifest.hpp"
#include "dwd/svg.hpp"
#include "dwd/trainer.hpp"
#include "dwd/transcript_io.hpp"

using namespace dwd;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("dwd_io_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("config parsing") {
  auto c = config::Config::parse(
      "# comment\n"
      "train.lr = 0.01   # trailing\n"
      "\n"
      "train.pool_sizes = 2, 9\n"
      "world.domain_tag=shifted_b\n");
  CHECK(c.get_double("train.lr", 0) == 0.01);
  CHECK(c.get_sizes("train.pool_sizes", {}) == std::vector<std::size_t>{2, 9});
  CHECK(c.get_u64("train.batch", 17) == 17);
  c.apply_overrides({"train.batch=8", "train.batch = 12"});
  CHECK(c.get_u64("train.batch", 0) == 12);

  auto t = config::train_config(c);
  CHECK(t.lr == 0.01);
  CHECK(t.batch == 12);
  CHECK(t.pool_sizes == std::vector<std::size_t>{2, 9});
  CHECK(config::world_config(c).domain == world::DomainTag::kShiftedB);

  auto again = config::Config::parse(c.dump());
  CHECK(again.values() == c.values());

  using config::ConfigError;
  CHECK_THROWS_AS(config::Config::parse("nope.key = 1"), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("train.lr"), ConfigError);
  CHECK_THROWS_AS(c.apply_overrides({"train.lr"}), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("train.batch = -3").get_u64("train.batch", 0), ConfigError);
  CHECK_THROWS_AS(config::Config::parse("train.lr = fast").get_double("train.lr", 0), ConfigError);
  CHECK_THROWS_AS(config::train_config(config::Config::parse("train.pool_sizes = 3")), ConfigError);
  CHECK_THROWS_AS(config::train_config(config::Config::parse("train.variant = magic")), ConfigError);
  CHECK(config::train_config(config::Config::parse("train.straight_through = 1")).straight_through);
  CHECK_THROWS_AS(config::train_config(config::Config::parse("train.straight_through = 2")), ConfigError);
  CHECK_THROWS_AS(config::world_config(config::Config::parse("world.domain_tag = mars")), ConfigError);
  CHECK_THROWS_AS(config::Config::load("/nonexistent/dwd.cfg"), ConfigError);
}

TEST_CASE("manifest round trip and verification") {
  auto dir = scratch("manifest");
  std::ofstream(dir / "a.txt") << "abc";
  io::Manifest m;
  m.set("seed", "7");
  m.set("command", "train");
  m.add_artifact(dir, "a.txt");
  CHECK(m.hashes.at("a.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  m.write(dir / "manifest.txt");
  auto back = io::Manifest::read(dir / "manifest.txt");
  CHECK(back.entries == m.entries);
  CHECK(back.hashes == m.hashes);
  CHECK(back.verify(dir));
  std::ofstream(dir / "a.txt") << "abd";
  CHECK_FALSE(back.verify(dir));
  std::filesystem::remove_all(dir);

  CHECK(std::regex_match(io::run_directory_name(42), std::regex(R"(\d{8}T\d{6}Z-seed42)")));
}

TEST_CASE("transcripts survive json and files") {
  train::Model m(train::init_checkpoint(train::Pretraining::kDiscreteElbo, 5), "init");
  world::WorldConfig wc;
  RngStream rng(1, "io/pools");
  std::vector<world::Pool> pools;
  for (std::size_t P : {2, 4, 9}) pools.push_back(world::sample_random_pool(P, wc, rng));
  auto ts = game::rollout(m.player(), pools, 3, 11);

  for (const auto& t : ts) {
    auto j = io::transcript_to_json(t);
    CHECK(j.at("pool").at("target_index").get<std::size_t>() == t.pool.target_index + 1);
    CHECK(io::transcript_from_json(j) == t);
    CHECK(io::transcript_from_json(io::json::parse(j.dump())) == t);
  }
  auto dir = scratch("transcripts");
  io::append_transcripts(dir / "t.jsonl", {ts[0]});
  io::append_transcripts(dir / "t.jsonl", {ts[1], ts[2]});
  CHECK(io::read_transcripts(dir / "t.jsonl") == ts);
  std::filesystem::remove_all(dir);

  auto bad = io::transcript_to_json(ts[0]);
  bad["final_guess"] = 0;
  CHECK_THROWS(io::transcript_from_json(bad));
  bad = io::transcript_to_json(ts[0]);
  bad["pool"]["target_index"] = 99;
  CHECK_THROWS(io::transcript_from_json(bad));
}

TEST_CASE("image json and svg") {
  world::WorldImage img;
  img.slots.assign(world::kDefaultSlots, world::Slot{});
  img.slots[0] = {true, world::ObjShape::kCircle, world::Color::kRed, world::Size::kLarge};
  img.slots[3] = {true, world::ObjShape::kSquare, world::Color::kBlue, world::Size::kSmall};
  CHECK(io::image_from_json(io::image_to_json(img)) == img);

  auto svg = render::image_svg(img);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("width=\"200\"") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
  CHECK(render::image_svg(img, true) != svg);
  CHECK(render::describe(img) == "large red circle, small blue square");
}
