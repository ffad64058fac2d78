#include "prophet/synthdata.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "prophet/rng.hpp"

namespace prophet {

Catalog::Catalog(std::vector<std::string> objects, std::vector<std::string> attributes,
                 std::vector<std::string> relations, std::vector<std::string> nv_words) {
  if (objects.empty() || attributes.empty() || relations.empty() || nv_words.empty()) {
    throw std::invalid_argument("catalog word classes must be nonempty");
  }
  auto add = [&](const std::string& w, WordClass c) {
    if (!index_.emplace(w, static_cast<TokenId>(words_.size())).second) {
      throw std::invalid_argument("catalog word '" + w + "' appears twice");
    }
    words_.push_back(w);
    classes_.push_back(c);
  };
  add("<bos>", WordClass::special);
  add("<eos>", WordClass::special);
  add("<pad>", WordClass::special);
  article_ = static_cast<TokenId>(words_.size());
  for (const auto& w : nv_words) add(w, WordClass::nv);
  first_object_ = static_cast<TokenId>(words_.size());
  for (const auto& w : objects) add(w, WordClass::object);
  first_attribute_ = static_cast<TokenId>(words_.size());
  for (const auto& w : attributes) add(w, WordClass::attribute);
  first_relation_ = static_cast<TokenId>(words_.size());
  for (const auto& w : relations) add(w, WordClass::relation);
  objects_ = objects.size();
  attributes_ = attributes.size();
  relations_ = relations.size();
}

const Catalog& Catalog::standard() {
  static const Catalog kCatalog(
      {"shirt", "pants", "hat", "shoe", "dog", "cat", "horse", "bird", "car", "bus", "bike", "boat",
       "cup", "bowl", "chair", "table"},
      {"black", "white", "red", "blue", "green", "yellow", "brown", "small", "large", "wooden"},
      {"next-to", "on", "under", "near", "behind", "beside"}, {"a", "the", "of"});
  return kCatalog;
}

TokenId Catalog::object_token(std::size_t id) const {
  if (id >= objects_) throw std::out_of_range("object id " + std::to_string(id));
  return first_object_ + static_cast<TokenId>(id);
}

TokenId Catalog::attribute_token(std::size_t id) const {
  if (id >= attributes_) throw std::out_of_range("attribute id " + std::to_string(id));
  return first_attribute_ + static_cast<TokenId>(id);
}

TokenId Catalog::relation_token(std::size_t id) const {
  if (id >= relations_) throw std::out_of_range("relation id " + std::to_string(id));
  return first_relation_ + static_cast<TokenId>(id);
}

WordClass Catalog::word_class(TokenId token) const {
  if (token >= words_.size()) throw std::out_of_range("token " + std::to_string(token));
  return classes_[token];
}

std::size_t Catalog::class_index(TokenId token) const {
  switch (word_class(token)) {
    case WordClass::object: return token - first_object_;
    case WordClass::attribute: return token - first_attribute_;
    case WordClass::relation: return token - first_relation_;
    case WordClass::nv: return token - article_;
    case WordClass::special: return token;
  }
  return token;
}

const std::string& Catalog::word(TokenId token) const {
  if (token >= words_.size()) throw std::out_of_range("token " + std::to_string(token));
  return words_[token];
}

std::optional<TokenId> Catalog::token(const std::string& w) const {
  const auto it = index_.find(w);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Catalog::object_id(const std::string& w) const {
  const auto t = token(w);
  if (!t || classes_[*t] != WordClass::object) return std::nullopt;
  return *t - first_object_;
}

std::optional<std::size_t> Catalog::attribute_id(const std::string& w) const {
  const auto t = token(w);
  if (!t || classes_[*t] != WordClass::attribute) return std::nullopt;
  return *t - first_attribute_;
}

bool Scene::has_shared_attribute() const {
  for (std::size_t a = 0; a < regions.size(); ++a)
    for (std::size_t b = a + 1; b < regions.size(); ++b)
      if (regions[a].attribute == regions[b].attribute) return true;
  return false;
}

void GeneratorConfig::validate(const Catalog& catalog) const {
  if (min_regions < 2) {
    throw std::invalid_argument("the two-noun-phrase template needs at least 2 regions per scene");
  }
  if (max_regions < min_regions) throw std::invalid_argument("max_regions < min_regions");
  if (max_regions > catalog.object_count() || max_regions > catalog.attribute_count()) {
    throw std::invalid_argument("max_regions exceeds the catalog's distinct objects or attributes");
  }
  if (feature_dim < catalog.object_count() + catalog.attribute_count()) {
    throw std::invalid_argument("feature_dim " + std::to_string(feature_dim) +
                                " cannot hold the object and attribute blocks");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) {
    throw std::invalid_argument("ambiguity must lie in [0, 1]");
  }
}

TaggedCaption describe(const Scene& scene, std::size_t subject, std::size_t object,
                       std::size_t relation, const Catalog& catalog, bool article_nv) {
  if (subject >= scene.size() || object >= scene.size() || subject == object) {
    throw std::invalid_argument("describe: subject and object must be distinct regions of the scene");
  }
  TaggedCaption c;
  auto noun_phrase = [&](std::size_t region) {
    const std::size_t start = c.tokens.size();
    const std::size_t span_start = article_nv ? start + 1 : start;
    const Tag tag = Tag::np(span_start, start + 2);
    c.tokens.push_back(catalog.article_token());
    c.tags.push_back(article_nv ? Tag::nv() : tag);
    c.gold_region.push_back(article_nv ? std::nullopt : std::optional<std::size_t>(region));
    c.tokens.push_back(catalog.attribute_token(scene.regions[region].attribute));
    c.tags.push_back(tag);
    c.gold_region.push_back(region);
    c.tokens.push_back(catalog.object_token(scene.regions[region].object));
    c.tags.push_back(tag);
    c.gold_region.push_back(region);
  };
  noun_phrase(subject);
  c.tokens.push_back(catalog.relation_token(relation));
  c.tags.push_back(Tag::other());
  c.gold_region.push_back(subject);
  noun_phrase(object);
  c.tokens.push_back(kEos);
  c.tags.push_back(Tag::nv());
  c.gold_region.push_back(std::nullopt);
  return c;
}

std::vector<double> region_feature(const Region& region, const Catalog& catalog,
                                   const GeneratorConfig& config, Rng& rng) {
  std::vector<double> v(config.feature_dim, 0.0);
  v[region.object] = 1.0;
  v[catalog.object_count() + region.attribute] = 1.0;
  if (config.noise > 0.0) {
    for (auto& x : v) x += rng.normal(0.0, config.noise);
  }
  return v;
}

namespace {

// First `k` entries of a random permutation of [0, n).
std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace

Instance generate_instance(std::uint64_t seed, const Catalog& catalog, const GeneratorConfig& config) {
  config.validate(catalog);
  Rng rng(seed);
  Instance inst;
  inst.seed = seed;

  const std::size_t n = config.min_regions + rng.below(config.max_regions - config.min_regions + 1);
  const auto objects = sample_distinct(rng, catalog.object_count(), n);
  const auto attributes = sample_distinct(rng, catalog.attribute_count(), n);
  inst.scene.regions.resize(n);
  for (std::size_t k = 0; k < n; ++k) inst.scene.regions[k] = {objects[k], attributes[k]};

  // Salience follows catalog order: the caption names the two regions whose
  // objects come first, so the described pair is recoverable from the image.
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return objects[a] < objects[b]; });
  const std::size_t subject = rank[0];
  const std::size_t object = rank[1];

  // The subject shares its attribute with one other region.
  if (rng.bernoulli(config.ambiguity)) {
    std::size_t partner = rng.below(n - 1);
    if (partner >= subject) ++partner;
    inst.scene.regions[partner].attribute = inst.scene.regions[subject].attribute;
  }

  const std::size_t relation = rng.below(catalog.relation_count());
  inst.caption = describe(inst.scene, subject, object, relation, catalog, config.article_nv);

  std::vector<std::vector<double>> feats;
  feats.reserve(n);
  for (const auto& r : inst.scene.regions) feats.push_back(region_feature(r, catalog, config, rng));
  inst.features = RegionFeatureSet::from_regions(feats);
  return inst;
}

Split make_split(std::uint64_t seed, const Catalog& catalog, SplitSizes sizes,
                 const GeneratorConfig& config) {
  config.validate(catalog);
  const std::uint64_t base = splitmix64(seed);
  const std::size_t total = sizes.train + sizes.val + sizes.test;
  std::vector<Instance> all(total);
  const auto count = static_cast<long>(total);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < count; ++k) {
    all[static_cast<std::size_t>(k)] =
        generate_instance(base + static_cast<std::uint64_t>(k), catalog, config);
  }
  Split split;
  auto take = [&](std::vector<Instance>& dst, std::size_t from, std::size_t n) {
    dst.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(from)),
               std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(from + n)));
  };
  take(split.train, 0, sizes.train);
  take(split.val, sizes.train, sizes.val);
  take(split.test, sizes.train + sizes.val, sizes.test);
  return split;
}

}  // namespace prophet
