#pragma once

// Attention-enhanced LSTM caption decoder: an LSTM fed with the previous word
// embedding and the mean region feature, additive attention over regions
// queried by the hidden state, and a linear word predictor over [h; context].

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "prophet/autodiff.hpp"

namespace prophet {

using TokenId = std::uint32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPad = 2;

// V holds one region per column (d x N); mean is the column mean (d x 1).
struct RegionFeatureSet {
  Tensor V;
  Tensor mean;

  static RegionFeatureSet from_regions(const std::vector<std::vector<double>>& regions);
  std::size_t count() const { return V.cols(); }
  std::size_t dim() const { return V.rows(); }
};

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 16;
  std::size_t feature = 32;
  std::size_t hidden = 16;
  std::size_t attention = 32;

  bool operator==(const ModelDims&) const = default;
};

// Gate weights act on the stacked [input; h_prev] column.
struct LstmParams {
  Tensor Wi, Wf, Wo, Wg;
  Tensor bi, bf, bo, bg;
};

struct ModelParams {
  ModelDims dims;

  Tensor W_e;      // vocab x embed
  LstmParams dec;  // input embed + feature
  Tensor w_alpha;  // 1 x attention
  Tensor W_h;      // attention x hidden
  Tensor W_V;      // attention x feature
  Tensor W_p;      // vocab x (hidden + feature)
  Tensor b_p;      // vocab x 1
  LstmParams fwd;  // prophet encoder, input embed
  LstmParams bwd;
  Tensor W_q;      // hidden x 2 hidden

  static constexpr std::size_t kTensorCount = 31;

  // Fixed order used by checkpoints, optimizers and gradient checks.
  std::array<Tensor*, kTensorCount> tensors();
  std::array<const Tensor*, kTensorCount> tensors() const;
  static const std::array<std::string_view, kTensorCount>& names();

  // Shapes implied by `dims`, in tensors() order.
  static std::array<Shape, kTensorCount> shapes_for(const ModelDims& dims);

  void validate() const;
};

// Uniform in [-scale, scale] from a seeded generator.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed, double scale = 0.08);

// Copy of `params` whose tensors are leaves on `tape`.
ModelParams bind(Tape& tape, const ModelParams& params);

// Gradients of each bound tensor, shaped like the parameters.
ModelParams collect_gradients(const Gradients& grads, const ModelParams& bound);

struct DecoderState {
  Tensor h;
  Tensor c;

  static DecoderState zeros(std::size_t hidden);
};

// One LSTM step on column `input`.
DecoderState lstm_step(const LstmParams& p, const Tensor& input, const DecoderState& state);

// W_V * V, shared by every attention query against one feature set.
Tensor project_regions(const RegionFeatureSet& features, const ModelParams& params);

struct Attention {
  Tensor alpha;    // 1 x N
  Tensor context;  // d x 1
};

Attention attend(const Tensor& query, const Tensor& region_keys, const RegionFeatureSet& features,
                 const ModelParams& params);
Attention attend(const Tensor& query, const RegionFeatureSet& features, const ModelParams& params);

// Word embedding for `token` as a column.
Tensor embed(TokenId token, const ModelParams& params);

struct StepOutput {
  DecoderState state;
  Attention attention;
  Tensor logits;  // vocab x 1
};

StepOutput decode_step(TokenId prev_word, const DecoderState& state, const RegionFeatureSet& features,
                       const ModelParams& params, const std::optional<Tensor>& context_override = {});

// Same as decode_step with precomputed W_V * V.
StepOutput decode_step(TokenId prev_word, const DecoderState& state, const RegionFeatureSet& features,
                       const Tensor& region_keys, const ModelParams& params,
                       const std::optional<Tensor>& context_override = {});

// Logits from [h; context].
Tensor predict_logits(const Tensor& h, const Tensor& context, const ModelParams& params);

// -sum_t log softmax(logits_t)[target_t]; PAD targets are skipped.
Tensor sequence_nll(std::span<const Tensor> logits, std::span<const TokenId> targets);

struct TeacherForcedRollout {
  std::vector<Tensor> hidden;   // h_t per step
  std::vector<Tensor> alphas;   // 1 x N per step
  std::vector<Tensor> logits;   // vocab x 1 per step
  Tensor region_keys;
};

// Runs the decoder on BOS, targets[0..T-2] and records every step.
TeacherForcedRollout teacher_force(const RegionFeatureSet& features, std::span<const TokenId> targets,
                                   const ModelParams& params);

struct GreedyResult {
  std::vector<TokenId> tokens;       // EOS excluded
  std::vector<std::vector<double>> attention;  // one alpha per emitted token
};

GreedyResult greedy_decode(const RegionFeatureSet& features, const ModelParams& params,
                           std::size_t max_len);

}  // namespace prophet
