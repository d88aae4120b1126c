#pragma once

#include <string>
#include <vector>

#include "bast/tensor.hpp"

BAST_NAMESPACE_BEGIN

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig config = {});

  // Applies one update from the current parameter gradients. Throws
  // UpdateError naming the parameter if any gradient is not finite; in that
  // case no parameter is modified.
  void step();
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  const Tensor& first_moment(std::size_t i) const { return first_[i]; }
  const Tensor& second_moment(std::size_t i) const { return second_[i]; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  AdamConfig config_;
  std::size_t steps_ = 0;
};

BAST_NAMESPACE_END
