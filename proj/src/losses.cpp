#include "bast/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bast/ops.hpp"

BAST_NAMESPACE_BEGIN

namespace {

std::size_t check_pair(const Tensor& target, const Tensor& prediction) {
  if (target.rank() != 2 || target.dim(1) != 2 || target.shape() != prediction.shape()) {
    throw DimensionError("loss expects matching [N, 2] tensors, got " + shape_str(target.shape()) + " and " +
                         shape_str(prediction.shape()));
  }
  return target.dim(0);
}

}  // namespace

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::MSE:
      return "MSE";
    case LossKind::AD:
      return "AD";
    case LossKind::Hybrid:
      return "Hybrid";
  }
  return "?";
}

LossKind parse_loss(const std::string& name) {
  if (name == "MSE" || name == "mse") return LossKind::MSE;
  if (name == "AD" || name == "ad") return LossKind::AD;
  if (name == "Hybrid" || name == "hybrid") return LossKind::Hybrid;
  throw ParameterError("unknown loss '" + name + "' (expected MSE, AD or Hybrid)");
}

Tensor mse_loss(Graph& g, const Tensor& target, const Tensor& prediction) {
  const std::size_t n = check_pair(target, prediction);
  auto c = target.data();
  auto p = prediction.data();
  double total = 0.0;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const double d = static_cast<double>(c[i]) - p[i];
    total += d * d;
  }
  Tensor out = Tensor::scalar(static_cast<Real>(total / static_cast<double>(n)));
  if (g.tracks({&prediction})) {
    g.record(out, [target, prediction, out, n]() mutable {
      const double go = std::as_const(out).grad()[0];
      auto c = target.data();
      auto p = prediction.data();
      auto gp = prediction.grad();
      for (std::size_t i = 0; i < 2 * n; ++i) {
        gp[i] += static_cast<Real>(go * 2.0 * (static_cast<double>(p[i]) - c[i]) / static_cast<double>(n));
      }
    });
  }
  return out;
}

Tensor ad_loss(Graph& g, const Tensor& target, const Tensor& prediction, double epsilon) {
  const std::size_t n = check_pair(target, prediction);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParameterError("AD clamp epsilon must lie in (0, 1)");
  auto c = target.data();
  auto p = prediction.data();
  const double lo = -1.0 + epsilon, hi = 1.0 - epsilon;
  // Per-sample d(loss_i)/d(prediction_i), before the 1/N factor.
  std::vector<double> dloss(2 * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = c[2 * i], cy = c[2 * i + 1], px = p[2 * i], py = p[2 * i + 1];
    const double cn = std::hypot(cx, cy), pn = std::hypot(px, py);
    if (cn == 0.0) throw InputError("AD loss needs nonzero ground-truth coordinates (sample " + std::to_string(i) + ")");
    if (pn < kDegenerateNorm) {
      total += std::acos(lo) / std::numbers::pi;
      continue;
    }
    const double cosine = (cx * px + cy * py) / (cn * pn);
    const double u = std::clamp(cosine, lo, hi);
    total += std::acos(u) / std::numbers::pi;
    if (cosine <= lo || cosine >= hi) continue;
    // d acos(u) / d p = -1/sqrt(1-u^2) * (c/(|c||p|) - u p/|p|^2)
    const double k = -1.0 / (std::numbers::pi * std::sqrt(1.0 - u * u));
    dloss[2 * i] = k * (cx / (cn * pn) - u * px / (pn * pn));
    dloss[2 * i + 1] = k * (cy / (cn * pn) - u * py / (pn * pn));
  }
  Tensor out = Tensor::scalar(static_cast<Real>(total / static_cast<double>(n)));
  if (g.tracks({&prediction})) {
    g.record(out, [prediction, out, n, dloss = std::move(dloss)]() mutable {
      const double go = std::as_const(out).grad()[0];
      auto gp = prediction.grad();
      for (std::size_t i = 0; i < 2 * n; ++i) gp[i] += static_cast<Real>(go * dloss[i] / static_cast<double>(n));
    });
  }
  return out;
}

Tensor hybrid_loss(Graph& g, const Tensor& target, const Tensor& prediction, double alpha, double epsilon) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("hybrid weight must lie in [0, 1], got " + std::to_string(alpha));
  Tensor ad = ad_loss(g, target, prediction, epsilon);
  Tensor mse = mse_loss(g, target, prediction);
  return add(g, scale(g, ad, static_cast<Real>(alpha)), scale(g, mse, static_cast<Real>(1.0 - alpha)));
}

Tensor compute_loss(Graph& g, const LossConfig& cfg, const Tensor& target, const Tensor& prediction) {
  switch (cfg.kind) {
    case LossKind::MSE:
      return mse_loss(g, target, prediction);
    case LossKind::AD:
      return ad_loss(g, target, prediction, cfg.epsilon);
    case LossKind::Hybrid:
      return hybrid_loss(g, target, prediction, cfg.alpha, cfg.epsilon);
  }
  throw ParameterError("unknown loss kind");
}

BAST_NAMESPACE_END
