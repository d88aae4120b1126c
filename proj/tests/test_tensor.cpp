#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bast/adam.hpp"
#include "bast/checkpoint.hpp"
#include "bast/ops.hpp"

using namespace bast;

namespace {

Tensor param(Shape shape, std::vector<Real> values) { return Tensor(std::move(shape), std::move(values), true); }

std::vector<Real> as_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor construction validates extents") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1, 2, 3}), DimensionError);
  Tensor t(Shape{2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.dim(-1) == 3);
  for (Real v : t.data()) CHECK(v == 0);
}

TEST_CASE("tensor copies alias storage, clone does not") {
  Tensor a(Shape{2}, {1, 2});
  Tensor b = a;
  b.data()[0] = 5;
  CHECK(a.data()[0] == 5);
  Tensor c = a.clone();
  c.data()[0] = 7;
  CHECK(a.data()[0] == 5);
  CHECK_FALSE(c.same_storage(a));
}

TEST_CASE("matmul hand cases") {
  Graph g;
  Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  Tensor m(Shape{2, 2}, {3, 4, 5, 6});
  CHECK(as_vec(matmul(g, eye, m)) == std::vector<Real>{3, 4, 5, 6});
  Tensor row(Shape{1, 2}, {1, 2});
  Tensor col(Shape{2, 1}, {3, 4});
  CHECK(as_vec(matmul(g, row, col)) == std::vector<Real>{11});
}

TEST_CASE("matmul batched and transposed") {
  Graph g;
  Tensor a(Shape{2, 1, 2}, {1, 2, 3, 4});
  Tensor b(Shape{2, 2, 2}, {1, 0, 0, 1, 2, 0, 0, 2});
  CHECK(as_vec(matmul(g, a, b)) == std::vector<Real>{1, 2, 6, 8});
  Tensor bt(Shape{1, 2}, {5, 6});
  CHECK(as_vec(matmul(g, a, bt, true)) == std::vector<Real>{17, 39});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  Tensor a(Shape{2, 3}), b(Shape{2, 3});
  try {
    matmul(g, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Graph g;
  auto u = softmax(g, Tensor(Shape{3}, {0, 0, 0}), 0);
  for (Real v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  auto s = softmax(g, Tensor(Shape{2}, {1000, 0}), 0);
  CHECK(std::isfinite(s.data()[0]));
  CHECK(s.data()[0] == doctest::Approx(1.0));
  CHECK(s.data()[1] == doctest::Approx(0.0));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<Real> v(4 * 57);
  for (auto& x : v) x = static_cast<Real>(nd(rng));
  auto r = softmax(g, Tensor(Shape{4, 57}, v), -1);
  for (std::size_t row = 0; row < 4; ++row) {
    double total = 0.0;
    for (std::size_t j = 0; j < 57; ++j) {
      CHECK(r.data()[row * 57 + j] > 0);
      total += r.data()[row * 57 + j];
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

TEST_CASE("softmax over a middle axis") {
  Graph g;
  auto r = softmax(g, Tensor(Shape{2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}), 1);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t in = 0; in < 2; ++in) {
      double total = 0.0;
      for (std::size_t j = 0; j < 3; ++j) total += r.data()[(o * 3 + j) * 2 + in];
      CHECK(total == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("layer_norm examples") {
  Graph g;
  Tensor gain(Shape{3}, {1, 1, 1}), bias(Shape{3}, {0, 0, 0});
  auto c = layer_norm(g, Tensor(Shape{3}, {4, 4, 4}), gain, bias, 0);
  for (Real v : c.data()) CHECK(v == 0);
  auto n = layer_norm(g, Tensor(Shape{3}, {1, 2, 3}), gain, bias, 0);
  double m = 0.0, var = 0.0;
  for (Real v : n.data()) m += v;
  m /= 3.0;
  for (Real v : n.data()) var += (v - m) * (v - m);
  var /= 3.0;
  CHECK(std::abs(m) <= 1e-5);
  CHECK(std::abs(var - 1.0) <= 1e-4);
  CHECK_THROWS_AS(layer_norm(g, Tensor(Shape{4}), gain, bias, 0), DimensionError);
}

TEST_CASE("gelu and dropout") {
  Graph g;
  CHECK(gelu(g, Tensor(Shape{1}, std::vector<Real>{0})).data()[0] == 0);
  // 0.5 * x * (1 + erf(x / sqrt 2)) at x = 1
  CHECK(gelu(g, Tensor(Shape{1}, std::vector<Real>{1})).data()[0] == doctest::Approx(0.8413447460685429));

  std::mt19937_64 rng(5);
  Tensor x(Shape{5}, {1, 2, 3, 4, 5});
  CHECK(as_vec(dropout(g, x, 0, true, rng)) == as_vec(x));
  CHECK(as_vec(dropout(g, x, 0.5, false, rng)) == as_vec(x));
  CHECK_THROWS_AS(dropout(g, x, 1.0, true, rng), ParameterError);
  CHECK_THROWS_AS(dropout(g, x, -0.1, true, rng), ParameterError);

  const std::size_t n = 1000000;
  Tensor ones(Shape{n}, std::vector<Real>(n, 1));
  auto d = dropout(g, ones, 0.2, true, rng);
  std::size_t kept = 0;
  for (Real v : d.data()) {
    if (v != 0) {
      ++kept;
      CHECK(v == doctest::Approx(1.25));
    }
  }
  CHECK(std::abs(static_cast<double>(kept) / n - 0.8) <= 0.01);
}

TEST_CASE("backward hand derivatives") {
  Tensor p = param(Shape{3}, {1, 2, 3});
  {
    Graph g;
    g.backward(sum(g, p));
  }
  CHECK(as_vec(Tensor(Shape{3}, {p.grad()[0], p.grad()[1], p.grad()[2]})) == std::vector<Real>{1, 1, 1});

  Tensor q = param(Shape{2}, {1, 2});
  Graph g;
  g.backward(sum(g, mul(g, q, q)));
  CHECK(q.grad()[0] == 2);
  CHECK(q.grad()[1] == 4);
}

TEST_CASE("backward contract errors") {
  Tensor p = param(Shape{2}, {1, 2});
  Graph g;
  Tensor y = scale(g, p, 2);
  CHECK_THROWS_AS(g.backward(y), ContractError);
  Tensor s = sum(g, y);
  g.backward(s);
  CHECK_THROWS_AS(g.backward(s), ContractError);
}

TEST_CASE("pure additions give all-ones gradients") {
  Tensor a = param(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = param(Shape{3}, {1, 1, 1});
  Graph g;
  Tensor x = add(g, add(g, a, b), a);
  g.backward(sum(g, x));
  for (Real v : a.grad()) CHECK(v == 2);
  for (Real v : b.grad()) CHECK(v == 2);
}

TEST_CASE("graph records nothing when disabled or for constants") {
  Tensor a(Shape{2}, {1, 2});
  Graph g;
  add(g, a, a);
  CHECK(g.size() == 0);
  Graph off(false);
  Tensor p = param(Shape{2}, {1, 2});
  add(off, p, p);
  CHECK(off.size() == 0);
}

TEST_CASE("shape ops") {
  Graph g;
  Tensor x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(as_vec(permute(g, x, {1, 0})) == std::vector<Real>{1, 4, 2, 5, 3, 6});
  CHECK(as_vec(slice(g, x, 1, 1, 2)) == std::vector<Real>{2, 3, 5, 6});
  CHECK(as_vec(concat(g, x, x, 0)).size() == 12);
  CHECK(concat(g, x, x, 1).shape() == Shape{2, 6});
  CHECK(reshape(g, x, Shape{3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(g, x, Shape{4, 2}), DimensionError);
  CHECK(as_vec(mean(g, x, 1)) == std::vector<Real>{2, 5});
  CHECK(as_vec(mean(g, x, 0)) == std::vector<Real>{2.5, 3.5, 4.5});
}

TEST_CASE("broadcasting is limited to leading dimensions") {
  Graph g;
  Tensor x(Shape{2, 3});
  CHECK_NOTHROW(add(g, x, Tensor(Shape{3})));
  CHECK_THROWS_AS(add(g, x, Tensor(Shape{2})), DimensionError);
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves the parameter and moments unchanged") {
    Tensor p = param(Shape{1}, {1});
    Adam opt({{"p", p}}, {0.1});
    p.grad()[0] = 0;
    opt.step();
    CHECK(p.data()[0] == 1);
    CHECK(opt.first_moment(0).data()[0] == 0);
    CHECK(opt.second_moment(0).data()[0] == 0);
  }
  SUBCASE("bias-corrected first step") {
    Tensor p = param(Shape{1}, {1});
    Adam opt({{"p", p}}, {0.1});
    p.grad()[0] = 1;
    opt.step();
    // m_hat = 1, v_hat = 1: p = 1 - 0.1 * 1 / (1 + 1e-8)
    CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("constant gradient decreases monotonically") {
    Tensor p = param(Shape{1}, {1});
    Adam opt({{"p", p}}, {0.1});
    Real prev = p.data()[0];
    for (int k = 0; k < 2; ++k) {
      p.grad()[0] = 1;
      opt.step();
      CHECK(p.data()[0] < prev);
      prev = p.data()[0];
    }
    CHECK(opt.steps() == 2);
  }
  SUBCASE("non-finite gradient names the parameter and updates nothing") {
    Tensor p = param(Shape{1}, {1});
    Tensor q = param(Shape{1}, {2});
    Adam opt({{"p", p}, {"weights.q", q}});
    p.grad()[0] = 1;
    q.grad()[0] = NAN;
    try {
      opt.step();
      FAIL("expected UpdateError");
    } catch (const UpdateError& e) {
      CHECK(std::string(e.what()).find("weights.q") != std::string::npos);
    }
    CHECK(p.data()[0] == 1);
    CHECK(opt.steps() == 0);
  }
}

TEST_CASE("tensor file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "bast_tensor_roundtrip.bin";
  TensorFile f;
  f.tag = "unit test";
  f.tensors.push_back({"a", Tensor(Shape{2, 2}, {1, 2, 3, 4})});
  f.tensors.push_back({"b.c", Tensor(Shape{3}, {-1.5, 0, 7})});
  write_tensor_file(path, f);
  const auto r = read_tensor_file(path);
  CHECK(r.tag == "unit test");
  REQUIRE(r.tensors.size() == 2);
  CHECK(r.find("a")->shape() == Shape{2, 2});
  CHECK(as_vec(*r.find("b.c")) == std::vector<Real>{-1.5, 0, 7});
  CHECK(r.find("missing") == nullptr);
  std::filesystem::remove(path);
}
