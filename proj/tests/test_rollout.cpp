#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <fstream>
#include <random>

#include "bast/rollout.hpp"

using namespace bast;

namespace {

SquareMatrix random_stochastic(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  SquareMatrix m{n, std::vector<double>(n * n)};
  for (auto& v : m.values) v = u(rng);
  return row_normalize(m);
}

// Plain triple-loop product in long double.
SquareMatrix oracle_multiply(const SquareMatrix& a, const SquareMatrix& b) {
  SquareMatrix c{a.n, std::vector<double>(a.n * a.n)};
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t j = 0; j < a.n; ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.n; ++k) s += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<double>(s);
    }
  }
  return c;
}

void check_row_stochastic(const SquareMatrix& m, double tol = 1e-9) {
  for (std::size_t r = 0; r < m.n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.n; ++c) {
      CHECK(m.at(r, c) >= 0.0);
      s += m.at(r, c);
    }
    CHECK(std::abs(s - 1.0) <= tol);
  }
}

ModelConfig tiny(std::size_t layers = 2) {
  ModelConfig c;
  c.dim = 16;
  c.layers = layers;
  c.heads = 2;
  c.mlp_dim = 24;
  c.dropout = 0.0;
  return c;
}

Tensor random_batch(std::size_t batch, std::uint64_t seed, std::size_t h = 129, std::size_t w = 61) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  std::vector<Real> v(batch * h * w);
  for (auto& x : v) x = static_cast<Real>(nd(rng));
  return Tensor(Shape{batch, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("augmented attention of uniform heads") {
  const std::vector<Real> att(2 * 2 * 2, 0.5f);
  const auto a = augmented_attention(att, 2, 2);
  CHECK(a.at(0, 0) == doctest::Approx(0.75));
  CHECK(a.at(0, 1) == doctest::Approx(0.25));
  CHECK(a.at(1, 0) == doctest::Approx(0.25));
  CHECK(a.at(1, 1) == doctest::Approx(0.75));
  CHECK_THROWS_AS(augmented_attention(att, 2, 3), DimensionError);
}

TEST_CASE("identity is a fixed point") {
  const auto id = SquareMatrix::identity(5);
  const auto r = cumulative_rollout({id, id, id}, id);
  REQUIRE(r.size() == 3);
  for (const auto& m : r) CHECK(m.values == id.values);
}

TEST_CASE("cumulative rollout stays row-stochastic and matches a plain oracle") {
  std::mt19937_64 rng(11);
  const std::size_t n = 24;
  std::vector<SquareMatrix> layers;
  for (int k = 0; k < 3; ++k) layers.push_back(random_stochastic(n, rng));
  const auto init = random_stochastic(n, rng);
  const auto r = cumulative_rollout(layers, init);
  SquareMatrix ref = init;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    ref = oracle_multiply(layers[k], ref);
    check_row_stochastic(r[k]);
    for (std::size_t i = 0; i < ref.values.size(); ++i) CHECK(std::abs(r[k].values[i] - ref.values[i]) <= 1e-6);
  }
  const auto p = multiply(layers[0], layers[1]);
  const auto q = oracle_multiply(layers[0], layers[1]);
  for (std::size_t i = 0; i < p.values.size(); ++i) CHECK(std::abs(p.values[i] - q.values[i]) <= 1e-12);
}

TEST_CASE("row normalization rejects empty rows") {
  SquareMatrix m{2, {1, 3, 0, 0}};
  CHECK_THROWS_AS(row_normalize(m), InputError);
  m.values = {1, 3, 2, 2};
  const auto n = row_normalize(m);
  CHECK(n.at(0, 1) == doctest::Approx(0.75));
  CHECK(n.at(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("model rollout at the canonical patch grid") {
  const BastModel model(tiny(2), 5);
  const auto rec = bast_rollout(model, random_batch(1, 1), random_batch(1, 2));
  CHECK(rec.grid_rows == 20);
  CHECK(rec.grid_cols == 9);
  for (const EncoderRollout* e : {&rec.left, &rec.right, &rec.center}) {
    REQUIRE(e->attention.size() == 2);
    REQUIRE(e->rollout.size() == 2);
    CHECK(e->final().n == 180);
    for (const auto& m : e->attention) check_row_stochastic(m, 1e-5);
    for (const auto& m : e->rollout) check_row_stochastic(m, 1e-5);
  }
  CHECK(rec.left_relevance.size() == 180);
  CHECK(rec.center_relevance.size() == 180);
  double s = 0.0;
  for (double v : rec.center_relevance) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("batched rollout equals the single-sample rollout") {
  const BastModel model(tiny(1), 6);
  const auto l = random_batch(3, 3), r = random_batch(3, 4);
  const auto batched = model.predict(l, r);
  const std::size_t plane = 129 * 61;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<Real> lv(l.data().begin() + b * plane, l.data().begin() + (b + 1) * plane);
    std::vector<Real> rv(r.data().begin() + b * plane, r.data().begin() + (b + 1) * plane);
    const auto single = bast_rollout(model, Tensor(Shape{1, 129, 61}, std::move(lv)),
                                     Tensor(Shape{1, 129, 61}, std::move(rv)));
    const auto from_batch = bast_rollout(batched, model, b);
    for (std::size_t i = 0; i < single.center.final().values.size(); ++i) {
      CHECK(std::abs(single.center.final().values[i] - from_batch.center.final().values[i]) <= 1e-5);
    }
  }
}

TEST_CASE("rollout rejects a forward pass with missing attention") {
  const BastModel model(tiny(2), 7);
  auto fwd = model.predict(random_batch(1, 8), random_batch(1, 9));
  fwd.left_attention.pop_back();
  CHECK_THROWS_AS(bast_rollout(fwd, model), ContractError);
}

TEST_CASE("nearest upsampling keeps the argmax patch") {
  std::vector<double> grid(20 * 9, 0.0);
  grid[7 * 9 + 4] = 1.0;
  const auto up = upsample_nearest(grid, 20, 9, 129, 61);
  REQUIRE(up.size() == 129 * 61);
  const auto it = std::max_element(up.begin(), up.end());
  const std::size_t y = static_cast<std::size_t>(it - up.begin()) / 61, x = static_cast<std::size_t>(it - up.begin()) % 61;
  CHECK(y * 20 / 129 == 7);
  CHECK(x * 9 / 61 == 4);
  for (std::size_t i = 0; i < up.size(); ++i) {
    const std::size_t r = (i / 61) * 20 / 129, c = (i % 61) * 9 / 61;
    CHECK(up[i] == grid[r * 9 + c]);
  }
}

TEST_CASE("heatmap export writes grids, overlays and metadata") {
  const auto dir = std::filesystem::temp_directory_path() / "bast_rollout_out";
  std::filesystem::remove_all(dir);
  const BastModel model(tiny(1), 8);
  const auto rec = bast_rollout(model, random_batch(1, 10), random_batch(1, 11));
  SampleMeta meta{"demo", "s", 40, Environment::Anechoic, Split::Test};
  export_heatmap(dir, rec, meta, 129, 61);
  for (const char* suffix : {"left", "right", "center", "left_overlay", "right_overlay", "center_overlay"}) {
    CHECK(std::filesystem::exists(dir / ("rollout_demo_" + std::string(suffix) + ".csv")));
  }
  CHECK(std::filesystem::exists(dir / "rollout_demo_meta.json"));
  std::ifstream is(dir / "rollout_demo_center.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  CHECK(lines == 20);
  std::filesystem::remove_all(dir);
}
