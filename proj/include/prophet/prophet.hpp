#pragma once

// Prophet attention: attention weights recomputed from a bidirectional
// encoding of the ground-truth caption, used during training as a target for
// the decoder's own attention and as an alternative context for re-predicting
// the caption.

#include <optional>
#include <string>
#include <vector>

#include "prophet/captioner.hpp"

namespace prophet {

enum class TagKind { np, nv, other };

struct Tag {
  TagKind kind = TagKind::other;
  std::size_t span_start = 0;  // NP only, inclusive
  std::size_t span_end = 0;    // NP only, inclusive

  static Tag np(std::size_t m, std::size_t n) { return {TagKind::np, m, n}; }
  static Tag nv() { return {TagKind::nv, 0, 0}; }
  static Tag other() { return {TagKind::other, 0, 0}; }

  bool operator==(const Tag&) const = default;
};

std::string to_string(const Tag& tag);
Tag parse_tag(const std::string& text);

// Target tokens y_1..y_T (BOS excluded, EOS included) with per-token tags and
// gold region indices.
struct TaggedCaption {
  std::vector<TokenId> tokens;
  std::vector<Tag> tags;
  std::vector<std::optional<std::size_t>> gold_region;

  std::size_t size() const { return tokens.size(); }
  // Throws std::invalid_argument when spans or alignments are malformed.
  void validate() const;
};

struct ProphetEncoding {
  std::vector<Tensor> rows;  // h'_t as hidden x 1 columns

  std::size_t size() const { return rows.size(); }
  Tensor matrix() const;  // T x hidden
};

ProphetEncoding encode_future(std::span<const TokenId> tokens, const ModelParams& params);

struct SpanDirective {
  bool masked = false;
  std::size_t first = 0;
  std::size_t last = 0;

  static SpanDirective span(std::size_t i, std::size_t j) { return {false, i, j}; }
  static SpanDirective mask() { return {true, 0, 0}; }
  bool operator==(const SpanDirective&) const = default;
};

SpanDirective dispatch_dpa(const TaggedCaption& caption, std::size_t t);
SpanDirective dispatch_cpa(const TaggedCaption& caption, std::size_t t);

// Mean of attend(h'_k) over k in [first, last]; 1 x N.
Tensor prophet_weights(const ProphetEncoding& enc, std::size_t first, std::size_t last,
                       const RegionFeatureSet& features, const ModelParams& params);

enum class Divergence { l1, l2, kl };
enum class Variant { baseline, cpa, dpa };

std::string to_string(Divergence d);
std::string to_string(Variant v);
Divergence parse_divergence(const std::string& text);
Variant parse_variant(const std::string& text);

// Sum over unmasked steps of d(alpha_t, alpha_hat_t): L1, squared L2, or
// KL(alpha_hat || alpha). With `detach_target` the alpha_hat rows receive no
// gradient.
Tensor attention_regularizer(std::span<const Tensor> alphas, std::span<const Tensor> alpha_hats,
                             const std::vector<bool>& mask, Divergence divergence,
                             bool detach_target = true);

// Cross-entropy of `targets` when the context is V * alpha_hat_t^T, summed
// over unmasked steps.
Tensor prophet_nll(std::span<const TokenId> targets, std::span<const Tensor> hidden,
                   std::span<const Tensor> alpha_hats, const std::vector<bool>& mask,
                   const RegionFeatureSet& features, const ModelParams& params);

struct LossConfig {
  double lambda = 0.1;
  Divergence divergence = Divergence::l1;
  bool detach_prophet = true;
};

// Everything the objective needs from one teacher-forced pass.
struct ProphetPass {
  TeacherForcedRollout rollout;
  ProphetEncoding encoding;
  std::vector<Tensor> alpha_hats;  // masked rows hold an unused uniform row
  std::vector<bool> mask;
};

ProphetPass prophet_forward(const RegionFeatureSet& features, const TaggedCaption& caption,
                            const ModelParams& params, Variant variant);

struct LossBreakdown {
  Tensor total;
  double l_ce = 0.0;
  double l_hat_ce = 0.0;
  double l_att = 0.0;
};

// L_CE + L_hat_CE + lambda * L_Att from an existing pass.
LossBreakdown combine_losses(const ProphetPass& pass, const TaggedCaption& caption,
                             const RegionFeatureSet& features, const ModelParams& params,
                             const LossConfig& config);

LossBreakdown full_loss(const RegionFeatureSet& features, const TaggedCaption& caption,
                        const ModelParams& params, const LossConfig& config, Variant variant);

}  // namespace prophet
