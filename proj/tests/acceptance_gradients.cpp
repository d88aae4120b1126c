#include <chrono>
#include <random>

#include "acceptance_gradients.hpp"
#include "bast/losses.hpp"
#include "bast/model.hpp"
#include "gradcheck.hpp"

namespace acceptance {

GradientOutcome model_gradient_check(double step, double tol) {
  using namespace bast;
  const auto start = std::chrono::steady_clock::now();
  ModelConfig cfg = ModelConfig::desk();
  cfg.dim = 32;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_dim = 64;
  cfg.dropout = 0.0;
  // 6x3 patches with padding on both axes.
  cfg.height = 42;
  cfg.width = 27;
  BastModel model(cfg, 31);

  std::mt19937_64 rng(32);
  std::normal_distribution<double> nd;
  const std::size_t n = 2 * cfg.height * cfg.width;
  std::vector<Real> l(n), r(n);
  for (auto& v : l) v = static_cast<Real>(nd(rng));
  for (auto& v : r) v = static_cast<Real>(nd(rng));
  const Tensor left(Shape{2, cfg.height, cfg.width}, std::move(l)), right(Shape{2, cfg.height, cfg.width}, std::move(r));
  const Tensor target(Shape{2, 2}, {0.5, 0.8660254037844386, -1, 0});

  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& p : model.parameters()) params.emplace_back(p.name, p.tensor);
  const auto report = testing::check_gradients(
      [&](Graph& g) {
        std::mt19937_64 unused(0);
        auto fr = model.forward(g, left, right, false, unused);
        return hybrid_loss(g, target, fr.coords, 0.5);
      },
      params, step, tol);

  GradientOutcome out;
  out.tensors = params.size();
  out.checked = report.checked;
  out.failures = report.failures.size();
  out.worst_rel = report.worst_rel;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace acceptance
