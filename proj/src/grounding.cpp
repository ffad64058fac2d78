#include "prophet/grounding.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace prophet {

std::size_t top1_region(std::span<const double> alpha) {
  if (alpha.empty()) throw std::invalid_argument("top1_region: empty attention vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < alpha.size(); ++i) {
    if (alpha[i] > alpha[best]) best = i;
  }
  return best;
}

namespace {

bool articles_grounded(const TaggedCaption& reference, const Catalog& catalog) {
  for (std::size_t t = 0; t < reference.size(); ++t) {
    if (catalog.word_class(reference.tokens[t]) == WordClass::nv) {
      return reference.tags[t].kind != TagKind::nv;
    }
  }
  return false;
}

bool in_noun_phrase(WordClass c) {
  return c == WordClass::nv || c == WordClass::attribute || c == WordClass::object;
}

Rate& class_rate(EvalReport& r, WordClass c) {
  switch (c) {
    case WordClass::object: return r.grounding_object;
    case WordClass::attribute: return r.grounding_attribute;
    case WordClass::relation: return r.grounding_relation;
    default: return r.grounding_article;
  }
}

void add(Rate& into, const Rate& r) {
  into.hits += r.hits;
  into.total += r.total;
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

TokenAlignment align_generated(std::span<const TokenId> tokens, const TaggedCaption& reference,
                               const Catalog& catalog) {
  std::map<TokenId, std::size_t> object_region;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    if (catalog.word_class(reference.tokens[t]) == WordClass::object && reference.gold_region[t]) {
      object_region.emplace(reference.tokens[t], *reference.gold_region[t]);
    }
  }
  const bool ground_articles = articles_grounded(reference, catalog);

  TokenAlignment out;
  out.gold.resize(tokens.size());
  out.word_class.resize(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) out.word_class[t] = catalog.word_class(tokens[t]);

  std::optional<std::size_t> previous_phrase;
  std::size_t t = 0;
  while (t < tokens.size()) {
    const WordClass c = out.word_class[t];
    if (c == WordClass::relation) {
      out.gold[t] = previous_phrase;
      ++t;
      continue;
    }
    if (!in_noun_phrase(c)) {
      ++t;
      continue;
    }
    // Maximal noun-phrase run [t, end).
    std::size_t end = t;
    while (end < tokens.size() && in_noun_phrase(out.word_class[end])) ++end;
    std::optional<std::size_t> referent;
    for (std::size_t k = t; k < end && !referent; ++k) {
      if (out.word_class[k] != WordClass::object) continue;
      const auto it = object_region.find(tokens[k]);
      if (it != object_region.end()) referent = it->second;
    }
    for (std::size_t k = t; k < end; ++k) {
      switch (out.word_class[k]) {
        case WordClass::object: {
          const auto it = object_region.find(tokens[k]);
          if (it != object_region.end()) out.gold[k] = it->second;
          break;
        }
        case WordClass::attribute:
          out.gold[k] = referent;
          break;
        case WordClass::nv:
          if (ground_articles) out.gold[k] = referent;
          break;
        default:
          break;
      }
    }
    previous_phrase = referent;
    t = end;
  }
  return out;
}

namespace {

Rate backward_rate(const Prediction& p, const TokenAlignment& a) {
  Rate r;
  for (std::size_t t = 0; t < p.tokens.size(); ++t) {
    if (!a.gold[t]) continue;
    ++r.total;
    if (t == 0 || !a.gold[t - 1]) continue;
    const auto top = top1_region(p.attention[t]);
    if (top == *a.gold[t - 1] && top != *a.gold[t]) ++r.hits;
  }
  return r;
}

void check_trace(const Prediction& p) {
  if (p.attention.size() != p.tokens.size()) {
    throw std::invalid_argument("attention trace length " + std::to_string(p.attention.size()) +
                                " differs from generated length " + std::to_string(p.tokens.size()));
  }
}

}  // namespace

Rate deviation_diagnostic(const Prediction& prediction, const TaggedCaption& reference,
                          const Catalog& catalog) {
  check_trace(prediction);
  return backward_rate(prediction, align_generated(prediction.tokens, reference, catalog));
}

EvalReport grounding_f1(std::span<const Prediction> predictions,
                        std::span<const TaggedCaption> references, const Catalog& catalog) {
  if (predictions.size() != references.size()) {
    throw std::invalid_argument("grounding_f1: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(references.size()) +
                                " references");
  }
  EvalReport r;
  r.instances = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pred = predictions[i];
    const auto& ref = references[i];
    check_trace(pred);
    const TokenAlignment align = align_generated(pred.tokens, ref, catalog);

    // Object-word F1: each reference object word matches at most one generated token.
    std::map<TokenId, std::size_t> ref_objects;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      if (catalog.word_class(ref.tokens[t]) == WordClass::object) {
        ++r.reference_objects;
        if (ref.gold_region[t]) ref_objects.emplace(ref.tokens[t], *ref.gold_region[t]);
      }
    }
    std::set<TokenId> used;
    for (std::size_t t = 0; t < pred.tokens.size(); ++t) {
      if (align.word_class[t] != WordClass::object) continue;
      ++r.predicted_objects;
      const auto it = ref_objects.find(pred.tokens[t]);
      if (it == ref_objects.end() || !used.insert(pred.tokens[t]).second) continue;
      ++r.matched_objects;
      if (top1_region(pred.attention[t]) == it->second) {
        ++r.true_positives;
        ++r.localized_objects;
      }
    }

    for (std::size_t t = 0; t < pred.tokens.size(); ++t) {
      if (!align.gold[t]) continue;
      const bool hit = top1_region(pred.attention[t]) == *align.gold[t];
      Rate one{hit ? 1u : 0u, 1};
      add(r.grounding, one);
      add(class_rate(r, align.word_class[t]), one);
    }

    for (std::size_t t = 0; t < ref.size(); ++t) {
      const TokenId generated = t < pred.tokens.size() ? pred.tokens[t]
                                : t == pred.tokens.size() ? kEos
                                                          : kPad;
      add(r.token_exact, Rate{generated == ref.tokens[t] ? 1u : 0u, 1});
    }

    add(r.backward_grounded, backward_rate(pred, align));
  }

  r.precision_all = r.predicted_objects == 0
                        ? 0.0
                        : static_cast<double>(r.true_positives) / static_cast<double>(r.predicted_objects);
  r.recall_all = r.reference_objects == 0
                     ? 0.0
                     : static_cast<double>(r.true_positives) / static_cast<double>(r.reference_objects);
  r.f1_all = f1(r.precision_all, r.recall_all);
  // Precision and recall coincide on the matched universe.
  const double loc = r.matched_objects == 0 ? 0.0
                                            : static_cast<double>(r.localized_objects) /
                                                  static_cast<double>(r.matched_objects);
  r.f1_loc = f1(loc, loc);
  return r;
}

std::vector<Prediction> decode_dataset_serial(std::span<const Instance> instances,
                                              const ModelParams& params, std::size_t max_len) {
  std::vector<Prediction> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    GreedyResult g = greedy_decode(inst.features, params, max_len);
    out.push_back({std::move(g.tokens), std::move(g.attention)});
  }
  return out;
}

std::vector<Prediction> decode_dataset(std::span<const Instance> instances, const ModelParams& params,
                                       std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("decode_dataset: max_len must be at least 1");
  // Exceptions cannot leave the parallel region, so shapes are checked first.
  params.validate();
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto& f = instances[k].features;
    if (f.dim() != params.dims.feature || f.count() == 0) {
      throw ShapeError("decode_dataset: instance " + std::to_string(k) + " has features " +
                       to_string(f.V.shape()) + ", model expects " +
                       std::to_string(params.dims.feature) + " rows");
    }
  }
  std::vector<Prediction> out(instances.size());
  const auto n = static_cast<long>(instances.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    GreedyResult g = greedy_decode(instances[k].features, params, max_len);
    out[k] = {std::move(g.tokens), std::move(g.attention)};
  }
  return out;
}

EvalReport evaluate(std::span<const Instance> instances, const ModelParams& params,
                    const Catalog& catalog, std::size_t max_len) {
  const auto predictions = decode_dataset(instances, params, max_len);
  std::vector<TaggedCaption> refs;
  refs.reserve(instances.size());
  for (const auto& inst : instances) refs.push_back(inst.caption);
  return grounding_f1(predictions, refs, catalog);
}

}  // namespace prophet
