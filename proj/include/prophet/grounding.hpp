#pragma once

// Grounding metrics over greedy-decoded captions. Generated tokens are
// aligned to regions through the reference caption: an object word inherits
// the gold region of the same word in the reference, attributes and
// (grounded) articles inherit the region of their noun phrase's object, and
// a relation word inherits the region of the preceding noun phrase.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prophet/captioner.hpp"
#include "prophet/prophet.hpp"
#include "prophet/synthdata.hpp"

namespace prophet {

struct Prediction {
  std::vector<TokenId> tokens;
  std::vector<std::vector<double>> attention;  // one alpha per token
};

// argmax with ties broken by the lowest index.
std::size_t top1_region(std::span<const double> alpha);

struct Rate {
  std::size_t hits = 0;
  std::size_t total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

struct EvalReport {
  std::size_t instances = 0;

  // F1 over object words: a generated object word is a true positive when the
  // reference names it and its top-1 region is the gold region.
  std::size_t true_positives = 0;
  std::size_t predicted_objects = 0;
  std::size_t reference_objects = 0;
  double precision_all = 0.0;
  double recall_all = 0.0;
  double f1_all = 0.0;

  // Restricted to correctly generated object words.
  std::size_t matched_objects = 0;
  std::size_t localized_objects = 0;
  double f1_loc = 0.0;

  Rate grounding;  // all gold-aligned generated tokens
  Rate grounding_object;
  Rate grounding_attribute;
  Rate grounding_relation;
  Rate grounding_article;

  Rate token_exact;        // position-wise agreement with the reference (EOS included)
  Rate backward_grounded;  // top-1 on the previous token's region, not the current one

  double grounding_accuracy() const { return grounding.value(); }
  double token_exact_rate() const { return token_exact.value(); }
  double backward_grounded_rate() const { return backward_grounded.value(); }
};

struct TokenAlignment {
  std::vector<std::optional<std::size_t>> gold;
  std::vector<WordClass> word_class;
};

TokenAlignment align_generated(std::span<const TokenId> tokens, const TaggedCaption& reference,
                               const Catalog& catalog);

EvalReport grounding_f1(std::span<const Prediction> predictions,
                        std::span<const TaggedCaption> references, const Catalog& catalog);

// Fraction of gold-aligned steps whose top-1 region is the previous token's
// gold region but not the current token's.
Rate deviation_diagnostic(const Prediction& prediction, const TaggedCaption& reference,
                          const Catalog& catalog);

// Greedy decoding of every instance, parallel over instances; results are in
// input order.
std::vector<Prediction> decode_dataset(std::span<const Instance> instances, const ModelParams& params,
                                       std::size_t max_len);
std::vector<Prediction> decode_dataset_serial(std::span<const Instance> instances,
                                              const ModelParams& params, std::size_t max_len);

EvalReport evaluate(std::span<const Instance> instances, const ModelParams& params,
                    const Catalog& catalog, std::size_t max_len = 16);

}  // namespace prophet
