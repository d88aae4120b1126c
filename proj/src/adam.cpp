#include "bast/adam.hpp"

#include <cmath>

BAST_NAMESPACE_BEGIN

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ParameterError("Adam learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    first_.emplace_back(p.tensor.shape());
    second_.emplace_back(p.tensor.shape());
  }
}

void Adam::step() {
  for (auto& p : params_) {
    for (Real v : std::as_const(p.tensor).grad()) {
      if (!std::isfinite(v)) throw UpdateError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].tensor.data();
    auto gr = std::as_const(params_[i].tensor).grad();
    auto m = first_[i].data();
    auto v = second_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = gr[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      w[j] = static_cast<Real>(w[j] - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

BAST_NAMESPACE_END
