#pragma once

// Synthetic grounded-captioning benchmark. A scene is a handful of regions,
// each an (object, attribute) pair with a distinct object. Its caption names
// the two most salient regions (objects earliest in catalog order) with the
// template "a ATTR OBJ REL a ATTR OBJ", so every visual token has an exact
// gold region.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prophet/prophet.hpp"
#include "prophet/rng.hpp"

namespace prophet {

enum class WordClass { special, nv, object, attribute, relation };

class Catalog {
 public:
  Catalog(std::vector<std::string> objects, std::vector<std::string> attributes,
          std::vector<std::string> relations, std::vector<std::string> nv_words);

  // 16 objects, 10 attributes, 6 relations and the function words a/the/of.
  static const Catalog& standard();

  std::size_t vocab_size() const { return words_.size(); }
  std::size_t object_count() const { return objects_; }
  std::size_t attribute_count() const { return attributes_; }
  std::size_t relation_count() const { return relations_; }

  TokenId object_token(std::size_t id) const;
  TokenId attribute_token(std::size_t id) const;
  TokenId relation_token(std::size_t id) const;
  TokenId article_token() const { return article_; }

  WordClass word_class(TokenId token) const;
  // Index within the token's class (object id for object tokens, etc.).
  std::size_t class_index(TokenId token) const;
  const std::string& word(TokenId token) const;
  std::optional<TokenId> token(const std::string& word) const;
  std::optional<std::size_t> object_id(const std::string& word) const;
  std::optional<std::size_t> attribute_id(const std::string& word) const;

 private:
  std::vector<std::string> words_;
  std::vector<WordClass> classes_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t objects_ = 0, attributes_ = 0, relations_ = 0;
  TokenId first_object_ = 0, first_attribute_ = 0, first_relation_ = 0, article_ = 0;
};

struct Region {
  std::size_t object = 0;
  std::size_t attribute = 0;
  bool operator==(const Region&) const = default;
};

struct Scene {
  std::vector<Region> regions;
  std::size_t size() const { return regions.size(); }
  bool has_shared_attribute() const;
};

struct GeneratorConfig {
  std::size_t min_regions = 2;
  std::size_t max_regions = 5;
  std::size_t feature_dim = 32;
  double noise = 0.1;
  // Probability that a scene holds two regions with the same attribute.
  double ambiguity = 0.3;
  // Tag articles as non-visual instead of part of their noun phrase.
  bool article_nv = false;

  void validate(const Catalog& catalog) const;
};

struct Instance {
  std::uint64_t seed = 0;
  Scene scene;
  RegionFeatureSet features;
  TaggedCaption caption;
};

// Caption for "subject REL object" with tags and gold regions.
TaggedCaption describe(const Scene& scene, std::size_t subject, std::size_t object,
                       std::size_t relation, const Catalog& catalog, bool article_nv);

// One-hot object block, one-hot attribute block, zero padding to
// `feature_dim`, then additive N(0, noise^2) per entry.
std::vector<double> region_feature(const Region& region, const Catalog& catalog,
                                   const GeneratorConfig& config, Rng& rng);

Instance generate_instance(std::uint64_t seed, const Catalog& catalog, const GeneratorConfig& config);

struct SplitSizes {
  std::size_t train = 200;
  std::size_t val = 50;
  std::size_t test = 50;
};

struct Split {
  std::vector<Instance> train, val, test;
};

// Instance k (counted across train, val, test) uses seed splitmix64(seed) + k.
Split make_split(std::uint64_t seed, const Catalog& catalog, SplitSizes sizes,
                 const GeneratorConfig& config = {});

}  // namespace prophet
