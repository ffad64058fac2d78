#include <doctest.h>

#include <cmath>
#include <set>

#include "prophet/synthdata.hpp"

using namespace prophet;

namespace {

const Catalog& cat() { return Catalog::standard(); }

Scene scene_of(std::initializer_list<std::pair<const char*, const char*>> regions) {
  Scene s;
  for (const auto& [o, a] : regions) s.regions.push_back({*cat().object_id(o), *cat().attribute_id(a)});
  return s;
}

std::vector<std::string> words(const TaggedCaption& c) {
  std::vector<std::string> out;
  for (TokenId t : c.tokens) out.push_back(cat().word(t));
  return out;
}

}  // namespace

TEST_CASE("catalog layout") {
  CHECK(cat().vocab_size() == 3 + 3 + 16 + 10 + 6);
  CHECK(cat().word(kBos) == "<bos>");
  CHECK(cat().word(kEos) == "<eos>");
  CHECK(cat().word(kPad) == "<pad>");
  CHECK(cat().word(cat().article_token()) == "a");
  CHECK(cat().word_class(cat().object_token(0)) == WordClass::object);
  CHECK(cat().class_index(cat().attribute_token(7)) == 7);
  CHECK(cat().word_class(cat().relation_token(5)) == WordClass::relation);
  CHECK_FALSE(cat().token("zebra").has_value());
  CHECK_FALSE(cat().object_id("black").has_value());
  CHECK_THROWS_AS(cat().object_token(16), std::out_of_range);
  CHECK_THROWS(Catalog({"x"}, {"x"}, {"r"}, {"a"}));
}

TEST_CASE("describe produces the template with tags and gold regions") {
  const Scene s = scene_of({{"shirt", "black"}, {"pants", "black"}});
  const TaggedCaption c = describe(s, 0, 1, 0, cat(), false);
  CHECK(words(c) == std::vector<std::string>{"a", "black", "shirt", "next-to", "a", "black", "pants", "<eos>"});
  const std::vector<std::optional<std::size_t>> gold = {0, 0, 0, 0, 1, 1, 1, std::nullopt};
  CHECK(c.gold_region == gold);
  CHECK(c.tags[0] == Tag::np(0, 2));
  CHECK(c.tags[2] == Tag::np(0, 2));
  CHECK(c.tags[3] == Tag::other());
  CHECK(c.tags[5] == Tag::np(4, 6));
  CHECK(c.tags[7] == Tag::nv());
  CHECK_NOTHROW(c.validate());

  const TaggedCaption nv = describe(s, 1, 0, 2, cat(), true);
  CHECK(nv.tags[0] == Tag::nv());
  CHECK(nv.tags[1] == Tag::np(1, 2));
  CHECK_FALSE(nv.gold_region[0].has_value());
  CHECK(nv.gold_region[1] == 1u);
  CHECK_NOTHROW(nv.validate());

  CHECK_THROWS(describe(s, 0, 0, 0, cat(), false));
  CHECK_THROWS(describe(s, 0, 2, 0, cat(), false));
}

TEST_CASE("region features encode object and attribute") {
  GeneratorConfig cfg;
  cfg.noise = 0.0;
  Rng rng(1);
  const auto v = region_feature({3, 4}, cat(), cfg, rng);
  REQUIRE(v.size() == 32);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == ((i == 3 || i == 20) ? 1.0 : 0.0));
}

TEST_CASE("generation is deterministic per seed") {
  const GeneratorConfig cfg;
  const Instance a = generate_instance(42, cat(), cfg);
  const Instance b = generate_instance(42, cat(), cfg);
  CHECK(a.scene.regions == b.scene.regions);
  CHECK(a.caption.tokens == b.caption.tokens);
  CHECK(a.features.V.values() == b.features.V.values());
  const Split s1 = make_split(5, cat(), {30, 10, 10}, cfg);
  const Split s2 = make_split(5, cat(), {30, 10, 10}, cfg);
  for (std::size_t i = 0; i < 30; ++i) CHECK(s1.train[i].features.V.values() == s2.train[i].features.V.values());
}

TEST_CASE("generated scenes respect the invariants") {
  const GeneratorConfig cfg;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Instance inst = generate_instance(seed, cat(), cfg);
    const std::size_t n = inst.scene.size();
    REQUIRE(n >= 2);
    REQUIRE(n <= 5);
    CHECK(inst.features.count() == n);
    CHECK(inst.features.dim() == 32);
    std::set<std::size_t> objects;
    for (const auto& r : inst.scene.regions) objects.insert(r.object);
    CHECK(objects.size() == n);
    CHECK_NOTHROW(inst.caption.validate());
    CHECK(inst.caption.tokens.size() == 8);
    // The caption names the two regions whose objects come first in the catalog.
    const std::size_t subject = *inst.caption.gold_region[1];
    const std::size_t object = *inst.caption.gold_region[5];
    for (std::size_t k = 0; k < n; ++k) {
      if (k == subject) continue;
      CHECK(inst.scene.regions[subject].object < inst.scene.regions[k].object);
      if (k != object) CHECK(inst.scene.regions[object].object < inst.scene.regions[k].object);
    }
    CHECK(cat().class_index(inst.caption.tokens[1]) == inst.scene.regions[subject].attribute);
    CHECK(cat().class_index(inst.caption.tokens[6]) == inst.scene.regions[object].object);
  }
}

TEST_CASE("objects are used uniformly") {
  const GeneratorConfig cfg;
  std::vector<double> counts(16, 0.0);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    for (const auto& r : generate_instance(seed, cat(), cfg).scene.regions) {
      counts[r.object] += 1.0;
      total += 1.0;
    }
  }
  const double p = 1.0 / 16.0;
  const double sigma = std::sqrt(total * p * (1.0 - p));
  for (double c : counts) CHECK(std::abs(c - total * p) <= 3.0 * sigma);
}

TEST_CASE("ambiguity controls shared attributes") {
  auto rate = [](double ambiguity) {
    GeneratorConfig cfg;
    cfg.ambiguity = ambiguity;
    int shared = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) shared += generate_instance(seed, cat(), cfg).scene.has_shared_attribute();
    return shared / 2000.0;
  };
  CHECK(rate(0.0) == 0.0);
  CHECK(rate(1.0) == 1.0);
  const double half = rate(0.5);
  CHECK(half >= 0.45);
  CHECK(half <= 0.55);
}

TEST_CASE("splits are disjoint") {
  const Split s = make_split(3, cat(), {200, 50, 50});
  CHECK(s.train.size() == 200);
  CHECK(s.val.size() == 50);
  CHECK(s.test.size() == 50);
  std::set<std::uint64_t> seeds;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& inst : *part) seeds.insert(inst.seed);
  CHECK(seeds.size() == 300);
}

TEST_CASE("noise-free features identify the region") {
  GeneratorConfig cfg;
  cfg.noise = 0.0;
  std::set<std::vector<double>> seen;
  for (std::size_t o = 0; o < 16; ++o)
    for (std::size_t a = 0; a < 10; ++a) {
      Rng rng(o * 10 + a);
      CHECK(seen.insert(region_feature({o, a}, cat(), cfg, rng)).second);
    }
  CHECK(seen.size() == 160);
}

TEST_CASE("configuration validation") {
  GeneratorConfig cfg;
  cfg.min_regions = 1;
  CHECK_THROWS_AS(cfg.validate(cat()), std::invalid_argument);
  cfg = {};
  cfg.max_regions = 11;
  CHECK_THROWS(cfg.validate(cat()));
  cfg = {};
  cfg.feature_dim = 20;
  CHECK_THROWS(cfg.validate(cat()));
  cfg = {};
  cfg.ambiguity = 1.5;
  CHECK_THROWS(cfg.validate(cat()));
  cfg = {};
  cfg.noise = -0.1;
  CHECK_THROWS(cfg.validate(cat()));
  cfg = {};
  cfg.min_regions = 1;
  CHECK_THROWS(make_split(1, cat(), {}, cfg));
}
