#pragma once

// Two-phase training: cross-entropy only for the first `pretrain_epochs`,
// then the variant's full objective. Batch size is one instance; the visit
// order is reshuffled every epoch from the run seed.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prophet/prophet.hpp"
#include "prophet/synthdata.hpp"

namespace prophet {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  LossConfig loss;
  Variant variant = Variant::dpa;
  std::size_t pretrain_epochs = 5;
  std::size_t total_epochs = 30;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> grad_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}

  // Throws std::domain_error naming the first non-finite gradient.
  void step(ModelParams& params, const ModelParams& grads);
  std::size_t steps() const { return steps_; }

 private:
  TrainConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Single update with a fresh optimizer state.
void optimizer_step(ModelParams& params, const ModelParams& grads, const TrainConfig& config);

double global_norm(const ModelParams& grads);

struct EpochLog {
  std::size_t epoch = 0;
  double l_ce = 0.0;
  double l_hat_ce = 0.0;
  double l_att = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::uint64_t seed = 0;
  TrainConfig config;
  std::vector<EpochLog> epochs;
};

struct FitResult {
  ModelParams params;
  RunLog log;
};

// Loss and parameter gradients for one instance at `epoch` (1-based).
struct InstanceGradient {
  LossBreakdown loss;
  ModelParams grads;
};

InstanceGradient instance_gradient(const Instance& inst, const ModelParams& params,
                                   const TrainConfig& config, std::size_t epoch);

using EpochCallback = std::function<void(const EpochLog&, const ModelParams&)>;

FitResult fit(const std::vector<Instance>& dataset, const TrainConfig& config, ModelParams params,
              const EpochCallback& on_epoch = {});

// FNV-1a over the raw bytes of every parameter tensor.
std::uint64_t checksum(const ModelParams& params);

}  // namespace prophet
