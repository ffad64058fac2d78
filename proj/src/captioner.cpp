#include "prophet/captioner.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "prophet/rng.hpp"

namespace prophet {

RegionFeatureSet RegionFeatureSet::from_regions(const std::vector<std::vector<double>>& regions) {
  if (regions.empty()) throw std::invalid_argument("feature set needs at least one region");
  const std::size_t d = regions.front().size();
  const std::size_t n = regions.size();
  Tensor V = Tensor::zeros(d, n);
  Tensor mean = Tensor::zeros(d, 1);
  for (std::size_t k = 0; k < n; ++k) {
    if (regions[k].size() != d) {
      throw ShapeError("region " + std::to_string(k) + " has dimension " +
                       std::to_string(regions[k].size()) + ", expected " + std::to_string(d));
    }
    for (std::size_t i = 0; i < d; ++i) V(i, k) = regions[k][i];
  }
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += V(i, k);
    mean(i, 0) = acc / static_cast<double>(n);
  }
  return {std::move(V), std::move(mean)};
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <class Self>
auto tensor_list(Self& p) {
  using Ptr = std::conditional_t<std::is_const_v<Self>, const Tensor*, Tensor*>;
  return std::array<Ptr, ModelParams::kTensorCount>{
      &p.W_e,
      &p.dec.Wi, &p.dec.Wf, &p.dec.Wo, &p.dec.Wg, &p.dec.bi, &p.dec.bf, &p.dec.bo, &p.dec.bg,
      &p.w_alpha, &p.W_h, &p.W_V, &p.W_p, &p.b_p,
      &p.fwd.Wi, &p.fwd.Wf, &p.fwd.Wo, &p.fwd.Wg, &p.fwd.bi, &p.fwd.bf, &p.fwd.bo, &p.fwd.bg,
      &p.bwd.Wi, &p.bwd.Wf, &p.bwd.Wo, &p.bwd.Wg, &p.bwd.bi, &p.bwd.bf, &p.bwd.bo, &p.bwd.bg,
      &p.W_q};
}

}  // namespace

std::array<Tensor*, ModelParams::kTensorCount> ModelParams::tensors() { return tensor_list(*this); }

std::array<const Tensor*, ModelParams::kTensorCount> ModelParams::tensors() const {
  return tensor_list(*this);
}

const std::array<std::string_view, ModelParams::kTensorCount>& ModelParams::names() {
  static const std::array<std::string_view, kTensorCount> kNames = {
      "W_e",
      "dec.Wi", "dec.Wf", "dec.Wo", "dec.Wg", "dec.bi", "dec.bf", "dec.bo", "dec.bg",
      "w_alpha", "W_h", "W_V", "W_p", "b_p",
      "fwd.Wi", "fwd.Wf", "fwd.Wo", "fwd.Wg", "fwd.bi", "fwd.bf", "fwd.bo", "fwd.bg",
      "bwd.Wi", "bwd.Wf", "bwd.Wo", "bwd.Wg", "bwd.bi", "bwd.bf", "bwd.bo", "bwd.bg",
      "W_q"};
  return kNames;
}

std::array<Shape, ModelParams::kTensorCount> ModelParams::shapes_for(const ModelDims& d) {
  const Shape dec_w{d.hidden, d.embed + d.feature + d.hidden};
  const Shape enc_w{d.hidden, d.embed + d.hidden};
  const Shape bias{d.hidden, 1};
  return {Shape{d.vocab, d.embed},
          dec_w, dec_w, dec_w, dec_w, bias, bias, bias, bias,
          Shape{1, d.attention}, Shape{d.attention, d.hidden}, Shape{d.attention, d.feature},
          Shape{d.vocab, d.hidden + d.feature}, Shape{d.vocab, 1},
          enc_w, enc_w, enc_w, enc_w, bias, bias, bias, bias,
          enc_w, enc_w, enc_w, enc_w, bias, bias, bias, bias,
          Shape{d.hidden, 2 * d.hidden}};
}

void ModelParams::validate() const {
  const auto expected = shapes_for(dims);
  const auto list = tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (list[i]->shape() != expected[i]) {
      throw ShapeError("parameter " + std::string(names()[i]) + " has shape " +
                       to_string(list[i]->shape()) + ", expected " + to_string(expected[i]));
    }
    for (double v : list[i]->data()) {
      if (!std::isfinite(v)) {
        throw std::domain_error("parameter " + std::string(names()[i]) + " has a non-finite entry");
      }
    }
  }
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed, double scale) {
  if (dims.vocab < 3 || dims.embed == 0 || dims.feature == 0 || dims.hidden == 0 ||
      dims.attention == 0) {
    throw std::invalid_argument("model dimensions must be positive and vocab must hold BOS/EOS/PAD");
  }
  ModelParams p;
  p.dims = dims;
  Rng rng(seed);
  const auto shapes = ModelParams::shapes_for(dims);
  const auto list = p.tensors();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
    std::vector<double> data(shapes[i].numel());
    for (auto& v : data) v = rng.uniform(-scale, scale);
    *list[i] = Tensor(shapes[i], std::move(data));
  }
  return p;
}

ModelParams bind(Tape& tape, const ModelParams& params) {
  ModelParams bound;
  bound.dims = params.dims;
  const auto src = params.tensors();
  const auto dst = bound.tensors();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) *dst[i] = tape.leaf(*src[i]);
  return bound;
}

ModelParams collect_gradients(const Gradients& grads, const ModelParams& bound) {
  ModelParams out;
  out.dims = bound.dims;
  const auto src = bound.tensors();
  const auto dst = out.tensors();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) *dst[i] = grads.of(*src[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderState DecoderState::zeros(std::size_t hidden) {
  return {Tensor::zeros(hidden, 1), Tensor::zeros(hidden, 1)};
}

DecoderState lstm_step(const LstmParams& p, const Tensor& input, const DecoderState& state) {
  const Tensor x = concat({input, state.h});
  const Tensor i = sigmoid(add(matmul(p.Wi, x), p.bi));
  const Tensor f = sigmoid(add(matmul(p.Wf, x), p.bf));
  const Tensor o = sigmoid(add(matmul(p.Wo, x), p.bo));
  const Tensor g = tanh(add(matmul(p.Wg, x), p.bg));
  Tensor c = add(mul(f, state.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

Tensor project_regions(const RegionFeatureSet& features, const ModelParams& params) {
  return matmul(params.W_V, features.V);
}

Attention attend(const Tensor& query, const Tensor& region_keys, const RegionFeatureSet& features,
                 const ModelParams& params) {
  const Tensor scores = tanh(add_broadcast_column(region_keys, matmul(params.W_h, query)));
  Tensor alpha = row_softmax(matmul(params.w_alpha, scores));
  Tensor context = matmul(features.V, transpose(alpha));
  return {std::move(alpha), std::move(context)};
}

Attention attend(const Tensor& query, const RegionFeatureSet& features, const ModelParams& params) {
  return attend(query, project_regions(features, params), features, params);
}

Tensor embed(TokenId token, const ModelParams& params) {
  if (token >= params.dims.vocab) {
    throw std::out_of_range("token " + std::to_string(token) + " outside vocabulary of " +
                            std::to_string(params.dims.vocab));
  }
  return gather_row(params.W_e, token);
}

Tensor predict_logits(const Tensor& h, const Tensor& context, const ModelParams& params) {
  return add(matmul(params.W_p, concat({h, context})), params.b_p);
}

StepOutput decode_step(TokenId prev_word, const DecoderState& state, const RegionFeatureSet& features,
                       const Tensor& region_keys, const ModelParams& params,
                       const std::optional<Tensor>& context_override) {
  const Tensor input = concat({embed(prev_word, params), features.mean});
  DecoderState next = lstm_step(params.dec, input, state);
  Attention att = attend(next.h, region_keys, features, params);
  Tensor logits = predict_logits(next.h, context_override ? *context_override : att.context, params);
  return {std::move(next), std::move(att), std::move(logits)};
}

StepOutput decode_step(TokenId prev_word, const DecoderState& state, const RegionFeatureSet& features,
                       const ModelParams& params, const std::optional<Tensor>& context_override) {
  return decode_step(prev_word, state, features, project_regions(features, params), params,
                     context_override);
}

Tensor sequence_nll(std::span<const Tensor> logits, std::span<const TokenId> targets) {
  if (logits.empty() || targets.empty()) throw std::invalid_argument("sequence_nll: empty sequence");
  if (logits.size() != targets.size()) {
    throw ShapeError("sequence_nll: " + std::to_string(logits.size()) + " logit rows for " +
                     std::to_string(targets.size()) + " targets");
  }
  std::optional<Tensor> total;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == kPad) continue;
    if (targets[t] >= logits[t].size()) {
      throw std::out_of_range("sequence_nll: target " + std::to_string(targets[t]) +
                              " outside vocabulary");
    }
    Tensor lp = pick_log_prob(logits[t], targets[t]);
    total = total ? add(*total, lp) : lp;
  }
  if (!total) return Tensor::scalar(0.0);
  return scale(*total, -1.0);
}

TeacherForcedRollout teacher_force(const RegionFeatureSet& features, std::span<const TokenId> targets,
                                   const ModelParams& params) {
  if (targets.empty()) throw std::invalid_argument("teacher_force: empty target sequence");
  TeacherForcedRollout out;
  out.region_keys = project_regions(features, params);
  DecoderState state = DecoderState::zeros(params.dims.hidden);
  TokenId prev = kBos;
  for (TokenId target : targets) {
    StepOutput step = decode_step(prev, state, features, out.region_keys, params);
    out.hidden.push_back(step.state.h);
    out.alphas.push_back(std::move(step.attention.alpha));
    out.logits.push_back(std::move(step.logits));
    state = std::move(step.state);
    prev = target;
  }
  return out;
}

GreedyResult greedy_decode(const RegionFeatureSet& features, const ModelParams& params,
                           std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  GreedyResult out;
  const Tensor keys = project_regions(features, params);
  DecoderState state = DecoderState::zeros(params.dims.hidden);
  TokenId prev = kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepOutput step = decode_step(prev, state, features, keys, params);
    const auto z = step.logits.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.size(); ++i) {
      if (z[i] > z[best]) best = i;
    }
    const auto token = static_cast<TokenId>(best);
    if (token == kEos) break;
    out.tokens.push_back(token);
    out.attention.push_back(step.attention.alpha.values());
    state = std::move(step.state);
    prev = token;
  }
  return out;
}

}  // namespace prophet
