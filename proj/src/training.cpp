#include "prophet/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "prophet/rng.hpp"

namespace prophet {

void TrainConfig::validate() const {
  if (!(loss.lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (pretrain_epochs > total_epochs) {
    throw std::invalid_argument("pretrain epochs exceed total epochs");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("grad clip must be positive");
  if (optimizer == OptimizerKind::adam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
}

double global_norm(const ModelParams& grads) {
  double acc = 0.0;
  for (const Tensor* g : grads.tensors())
    for (double v : g->data()) acc += v * v;
  return std::sqrt(acc);
}

void Optimizer::step(ModelParams& params, const ModelParams& grads) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
    if (p[i]->shape() != g[i]->shape()) {
      throw ShapeError("gradient for " + std::string(ModelParams::names()[i]) + " has shape " +
                       to_string(g[i]->shape()) + ", parameter is " + to_string(p[i]->shape()));
    }
    for (double v : g[i]->data()) {
      if (!std::isfinite(v)) {
        throw std::domain_error("non-finite gradient for parameter " +
                                std::string(ModelParams::names()[i]));
      }
    }
  }

  double factor = 1.0;
  if (config_.grad_clip) {
    const double norm = global_norm(grads);
    if (norm > *config_.grad_clip) factor = *config_.grad_clip / norm;
  }

  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.optimizer == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
      auto w = p[i]->mutable_data();
      const auto gi = g[i]->data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * factor * gi[k];
    }
    return;
  }

  if (m_.empty()) {
    for (const Tensor* t : p) {
      m_.emplace_back(t->size(), 0.0);
      v_.emplace_back(t->size(), 0.0);
    }
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < ModelParams::kTensorCount; ++i) {
    auto w = p[i]->mutable_data();
    const auto gi = g[i]->data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = gi[k] * factor;
      m[k] = b1 * m[k] + (1.0 - b1) * grad;
      v[k] = b2 * v[k] + (1.0 - b2) * grad * grad;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void optimizer_step(ModelParams& params, const ModelParams& grads, const TrainConfig& config) {
  Optimizer opt(config);
  opt.step(params, grads);
}

InstanceGradient instance_gradient(const Instance& inst, const ModelParams& params,
                                   const TrainConfig& config, std::size_t epoch) {
  const Variant variant = epoch <= config.pretrain_epochs ? Variant::baseline : config.variant;
  Tape tape;
  const ModelParams bound = bind(tape, params);
  LossBreakdown loss = full_loss(inst.features, inst.caption, bound, config.loss, variant);
  const Gradients grads = tape.backward(loss.total);
  InstanceGradient out{std::move(loss), collect_gradients(grads, bound)};
  out.loss.total = out.loss.total.detached();
  return out;
}

FitResult fit(const std::vector<Instance>& dataset, const TrainConfig& config, ModelParams params,
              const EpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");
  config.validate();
  params.validate();

  FitResult result;
  result.log.seed = config.seed;
  result.log.config = config;

  Optimizer optimizer(config);
  Rng order_rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.total_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t idx : order) {
      InstanceGradient ig = instance_gradient(dataset[idx], params, config, epoch);
      log.l_ce += ig.loss.l_ce;
      log.l_hat_ce += ig.loss.l_hat_ce;
      log.l_att += ig.loss.l_att;
      log.total += ig.loss.total.item();
      optimizer.step(params, ig.grads);
    }
    const auto n = static_cast<double>(dataset.size());
    log.l_ce /= n;
    log.l_hat_ce /= n;
    log.l_att /= n;
    log.total /= n;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(log);
    if (on_epoch) on_epoch(log, params);
  }
  result.params = std::move(params);
  return result;
}

std::uint64_t checksum(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* t : params.tensors()) {
    for (double v : t->data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace prophet
