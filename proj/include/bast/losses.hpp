#pragma once

#include <string>

#include "bast/tensor.hpp"

BAST_NAMESPACE_BEGIN

enum class LossKind { MSE, AD, Hybrid };

std::string loss_name(LossKind kind);  // "MSE" | "AD" | "Hybrid"
LossKind parse_loss(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::Hybrid;
  double alpha = 0.5;    // weight of the AD term in the hybrid loss
  double epsilon = 1e-7;  // cosine clamp margin before arccos
};

// Predictions with a norm below this are treated as degenerate by ad_loss.
inline constexpr double kDegenerateNorm = 1e-8;

// Mean squared Euclidean distance over the batch. target, prediction: [N, 2].
Tensor mse_loss(Graph& g, const Tensor& target, const Tensor& prediction);

// Mean angle between target and prediction divided by pi, in [0, 1]. The
// cosine is clamped to [-1 + eps, 1 - eps]. A degenerate prediction
// contributes the upper clamp value with zero gradient.
Tensor ad_loss(Graph& g, const Tensor& target, const Tensor& prediction, double epsilon = 1e-7);

// alpha * AD + (1 - alpha) * MSE.
Tensor hybrid_loss(Graph& g, const Tensor& target, const Tensor& prediction, double alpha, double epsilon = 1e-7);

Tensor compute_loss(Graph& g, const LossConfig& cfg, const Tensor& target, const Tensor& prediction);

BAST_NAMESPACE_END
