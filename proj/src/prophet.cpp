#include "prophet/prophet.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace prophet {

std::string to_string(const Tag& tag) {
  switch (tag.kind) {
    case TagKind::np:
      return "NP:" + std::to_string(tag.span_start) + ":" + std::to_string(tag.span_end);
    case TagKind::nv:
      return "NV";
    case TagKind::other:
      return "OTHER";
  }
  return "OTHER";
}

Tag parse_tag(const std::string& text) {
  if (text == "NV") return Tag::nv();
  if (text == "OTHER") return Tag::other();
  if (text.rfind("NP:", 0) == 0) {
    const auto colon = text.find(':', 3);
    if (colon != std::string::npos) {
      try {
        std::size_t used_m = 0, used_n = 0;
        const auto m_text = text.substr(3, colon - 3);
        const auto n_text = text.substr(colon + 1);
        const auto m = std::stoull(m_text, &used_m);
        const auto n = std::stoull(n_text, &used_n);
        if (used_m == m_text.size() && used_n == n_text.size()) return Tag::np(m, n);
      } catch (const std::exception&) {
      }
    }
  }
  throw std::invalid_argument("malformed tag '" + text + "'");
}

void TaggedCaption::validate() const {
  const auto T = tokens.size();
  if (T == 0) throw std::invalid_argument("caption is empty");
  if (tags.size() != T || gold_region.size() != T) {
    throw std::invalid_argument("caption has " + std::to_string(T) + " tokens but " +
                                std::to_string(tags.size()) + " tags and " +
                                std::to_string(gold_region.size()) + " gold regions");
  }
  for (std::size_t t = 0; t < T; ++t) {
    const auto& tag = tags[t];
    if (tag.kind == TagKind::nv && gold_region[t]) {
      throw std::invalid_argument("NV token at " + std::to_string(t) + " has a gold region");
    }
    if (tag.kind != TagKind::np) continue;
    if (!(tag.span_start <= t && t <= tag.span_end && tag.span_end < T)) {
      throw std::invalid_argument("NP span " + to_string(tag) + " does not cover token " +
                                  std::to_string(t));
    }
    for (std::size_t k = tag.span_start; k <= tag.span_end; ++k) {
      if (tags[k] != tag) {
        throw std::invalid_argument("tokens of span " + to_string(tag) + " disagree at " +
                                    std::to_string(k));
      }
    }
  }
}

Tensor ProphetEncoding::matrix() const {
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (const auto& r : rows) parts.push_back(transpose(r));
  return concat(parts);
}

ProphetEncoding encode_future(std::span<const TokenId> tokens, const ModelParams& params) {
  if (tokens.empty()) throw std::invalid_argument("encode_future: empty token sequence");
  const auto T = tokens.size();
  std::vector<Tensor> embedded;
  embedded.reserve(T);
  for (TokenId tok : tokens) embedded.push_back(embed(tok, params));

  std::vector<Tensor> forward(T), backward(T);
  DecoderState state = DecoderState::zeros(params.dims.hidden);
  for (std::size_t t = 0; t < T; ++t) {
    state = lstm_step(params.fwd, embedded[t], state);
    forward[t] = state.h;
  }
  state = DecoderState::zeros(params.dims.hidden);
  for (std::size_t t = T; t-- > 0;) {
    state = lstm_step(params.bwd, embedded[t], state);
    backward[t] = state.h;
  }

  ProphetEncoding enc;
  enc.rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    enc.rows.push_back(matmul(params.W_q, concat({forward[t], backward[t]})));
  }
  return enc;
}

SpanDirective dispatch_dpa(const TaggedCaption& caption, std::size_t t) {
  const auto& tag = caption.tags.at(t);
  switch (tag.kind) {
    case TagKind::np:
      return SpanDirective::span(tag.span_start, tag.span_end);
    case TagKind::nv:
      return SpanDirective::mask();
    case TagKind::other:
      break;
  }
  return SpanDirective::span(t, t);
}

SpanDirective dispatch_cpa(const TaggedCaption& caption, std::size_t t) {
  if (t >= caption.size()) throw std::out_of_range("dispatch_cpa: step outside caption");
  return SpanDirective::span(t, t);
}

namespace {

Tensor span_weights(const std::vector<Tensor>& per_step, std::size_t first, std::size_t last) {
  if (first == last) return per_step[first];
  std::vector<Tensor> rows(per_step.begin() + static_cast<std::ptrdiff_t>(first),
                           per_step.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  return mean_rows(concat(rows));
}

void check_span(const ProphetEncoding& enc, std::size_t first, std::size_t last) {
  if (first > last || last >= enc.size()) {
    throw std::out_of_range("invalid span (" + std::to_string(first) + ", " + std::to_string(last) +
                            ") for encoding of length " + std::to_string(enc.size()));
  }
}

}  // namespace

Tensor prophet_weights(const ProphetEncoding& enc, std::size_t first, std::size_t last,
                       const RegionFeatureSet& features, const ModelParams& params) {
  check_span(enc, first, last);
  const Tensor keys = project_regions(features, params);
  std::vector<Tensor> rows;
  for (std::size_t k = first; k <= last; ++k) {
    rows.push_back(attend(enc.rows[k], keys, features, params).alpha);
  }
  return mean_rows(concat(rows));
}

std::string to_string(Divergence d) {
  switch (d) {
    case Divergence::l1: return "l1";
    case Divergence::l2: return "l2";
    case Divergence::kl: return "kl";
  }
  return "l1";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::cpa: return "cpa";
    case Variant::dpa: return "dpa";
  }
  return "baseline";
}

Divergence parse_divergence(const std::string& text) {
  if (text == "l1") return Divergence::l1;
  if (text == "l2") return Divergence::l2;
  if (text == "kl") return Divergence::kl;
  throw std::invalid_argument("unknown divergence '" + text + "' (expected l1, l2 or kl)");
}

Variant parse_variant(const std::string& text) {
  if (text == "baseline") return Variant::baseline;
  if (text == "cpa") return Variant::cpa;
  if (text == "dpa") return Variant::dpa;
  throw std::invalid_argument("unknown variant '" + text + "' (expected baseline, cpa or dpa)");
}

namespace {

void require_simplex(const Tensor& row, const char* what, std::size_t t) {
  double total = 0.0;
  for (double v : row.data()) {
    if (v < -1e-6) {
      throw std::domain_error(std::string(what) + " row " + std::to_string(t) + " has a negative entry");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::domain_error(std::string(what) + " row " + std::to_string(t) + " sums to " +
                            std::to_string(total));
  }
}

void require_lengths(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) + " rows, got " +
                     std::to_string(got));
  }
}

Tensor accumulate_sum(std::optional<Tensor>& acc, const Tensor& term) {
  acc = acc ? add(*acc, term) : term;
  return *acc;
}

}  // namespace

Tensor attention_regularizer(std::span<const Tensor> alphas, std::span<const Tensor> alpha_hats,
                             const std::vector<bool>& mask, Divergence divergence,
                             bool detach_target) {
  require_lengths(alphas.size(), alpha_hats.size(), "attention_regularizer");
  require_lengths(alphas.size(), mask.size(), "attention_regularizer mask");
  std::optional<Tensor> total;
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    if (mask[t]) continue;
    require_simplex(alphas[t], "alpha", t);
    require_simplex(alpha_hats[t], "alpha_hat", t);
    const Tensor target = detach_target ? alpha_hats[t].detached() : alpha_hats[t];
    switch (divergence) {
      case Divergence::l1:
        accumulate_sum(total, l1_distance(alphas[t], target));
        break;
      case Divergence::l2:
        accumulate_sum(total, l2_squared_distance(alphas[t], target));
        break;
      case Divergence::kl:
        accumulate_sum(total, kl_divergence(target, alphas[t]));
        break;
    }
  }
  return total ? *total : Tensor::scalar(0.0);
}

Tensor prophet_nll(std::span<const TokenId> targets, std::span<const Tensor> hidden,
                   std::span<const Tensor> alpha_hats, const std::vector<bool>& mask,
                   const RegionFeatureSet& features, const ModelParams& params) {
  require_lengths(targets.size(), hidden.size(), "prophet_nll hidden");
  require_lengths(targets.size(), alpha_hats.size(), "prophet_nll alpha_hat");
  require_lengths(targets.size(), mask.size(), "prophet_nll mask");
  std::optional<Tensor> total;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (mask[t] || targets[t] == kPad) continue;
    const Tensor context = matmul(features.V, transpose(alpha_hats[t]));
    const Tensor logits = predict_logits(hidden[t], context, params);
    accumulate_sum(total, pick_log_prob(logits, targets[t]));
  }
  return total ? scale(*total, -1.0) : Tensor::scalar(0.0);
}

ProphetPass prophet_forward(const RegionFeatureSet& features, const TaggedCaption& caption,
                            const ModelParams& params, Variant variant) {
  ProphetPass pass;
  pass.rollout = teacher_force(features, caption.tokens, params);
  if (variant == Variant::baseline) return pass;

  const auto T = caption.size();
  pass.encoding = encode_future(caption.tokens, params);

  // f_Att(h'_k) for each k, computed lazily and shared across spans.
  std::vector<Tensor> per_step(T);
  std::vector<bool> have(T, false);
  auto step_alpha = [&](std::size_t k) {
    if (!have[k]) {
      per_step[k] = attend(pass.encoding.rows[k], pass.rollout.region_keys, features, params).alpha;
      have[k] = true;
    }
  };

  std::map<std::pair<std::size_t, std::size_t>, Tensor> span_cache;
  const auto N = features.count();
  const Tensor uniform({1, N}, std::vector<double>(N, 1.0 / static_cast<double>(N)));

  pass.alpha_hats.reserve(T);
  pass.mask.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const SpanDirective d =
        variant == Variant::dpa ? dispatch_dpa(caption, t) : dispatch_cpa(caption, t);
    pass.mask.push_back(d.masked);
    if (d.masked) {
      pass.alpha_hats.push_back(uniform);
      continue;
    }
    const auto key = std::make_pair(d.first, d.last);
    auto it = span_cache.find(key);
    if (it == span_cache.end()) {
      for (std::size_t k = d.first; k <= d.last; ++k) step_alpha(k);
      it = span_cache.emplace(key, span_weights(per_step, d.first, d.last)).first;
    }
    pass.alpha_hats.push_back(it->second);
  }
  return pass;
}

LossBreakdown combine_losses(const ProphetPass& pass, const TaggedCaption& caption,
                             const RegionFeatureSet& features, const ModelParams& params,
                             const LossConfig& config) {
  if (!(config.lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  LossBreakdown out;
  const Tensor ce = sequence_nll(pass.rollout.logits, caption.tokens);
  out.l_ce = ce.item();
  if (pass.alpha_hats.empty()) {
    out.total = ce;
    return out;
  }
  const Tensor hat_ce = prophet_nll(caption.tokens, pass.rollout.hidden, pass.alpha_hats, pass.mask,
                                    features, params);
  const Tensor att = attention_regularizer(pass.rollout.alphas, pass.alpha_hats, pass.mask,
                                           config.divergence, config.detach_prophet);
  out.l_hat_ce = hat_ce.item();
  out.l_att = att.item();
  out.total = add(add(ce, hat_ce), scale(att, config.lambda));
  return out;
}

LossBreakdown full_loss(const RegionFeatureSet& features, const TaggedCaption& caption,
                        const ModelParams& params, const LossConfig& config, Variant variant) {
  const ProphetPass pass = prophet_forward(features, caption, params, variant);
  return combine_losses(pass, caption, features, params, config);
}

}  // namespace prophet
