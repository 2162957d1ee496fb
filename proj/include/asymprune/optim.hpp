#pragma once

#include <string>
#include <vector>

#include "asymprune/tensor.hpp"

namespace asymprune {

struct OptimizerConfig {
  double learning_rate = 1e-4;  // constant schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct Param {
  std::string name;
  Tensor tensor;
};

// Adam with decoupled weight decay. Moment buffers are created on the first
// step and stay aligned with the parameter list by index; the parameter set
// must not change between steps.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  // Applies one update from the gradients currently held by the parameters.
  // Throws on non-finite gradients, naming the parameter.
  void step(std::vector<Param>& params);

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

void zero_grads(std::vector<Param>& params);

}  // namespace asymprune
