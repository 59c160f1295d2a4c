#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "stob/random.hpp"
#include "stob/tensor.hpp"

using stob::Rng;
using stob::Shape;
using stob::Tensor;
using i64 = std::int64_t;

// ---- shapes ---------------------------------------------------------------------

TEST_CASE("shape utilities") {
  CHECK(stob::numel({2, 3, 4}) == 24);
  CHECK(stob::numel({}) == 1);
  CHECK(stob::numel({5, 0, 2}) == 0);
  CHECK(stob::shape_str({2, 3}) == "(2, 3)");
  CHECK(stob::shape_str({}) == "()");
  CHECK_NOTHROW(stob::require_same_shape({1, 2}, {1, 2}, "test"));
  CHECK_THROWS_AS(stob::require_same_shape({1, 2}, {2, 1}, "test"),
                  stob::ShapeError);
}

// ---- construction and access -------------------------------------------------------

TEST_CASE("tensor construction, indexing and value access") {
  Tensor<double> z = Tensor<double>::zeros({2, 3});
  CHECK(z.defined());
  CHECK(z.shape() == Shape{2, 3});
  CHECK(z.rank() == 2);
  CHECK(z.size() == 6);
  for (double v : z.data()) CHECK(v == 0.0);

  Tensor<double> f = Tensor<double>::full({4}, 2.5);
  for (double v : f.data()) CHECK(v == 2.5);

  Tensor<double> s = Tensor<double>::scalar(7.0);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 7.0);

  Tensor<double> d = Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(d.at({0, 0}) == 1.0);
  CHECK(d.at({0, 1}) == 2.0);
  CHECK(d.at({1, 0}) == 3.0);
  CHECK(d.at({1, 1}) == 4.0);

  SUBCASE("negative axis indices count from the back") {
    Tensor<double> t = Tensor<double>::zeros({2, 3, 5});
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(-1) == 5);
    CHECK(t.dim(-3) == 2);
    CHECK_THROWS_AS(t.dim(3), stob::ShapeError);
    CHECK_THROWS_AS(t.dim(-4), stob::ShapeError);
  }

  SUBCASE("construction contract violations") {
    CHECK_THROWS_AS(Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0}),
                    stob::ShapeError);
    CHECK_THROWS_AS(Tensor<double>::zeros({2, -1}), stob::ShapeError);
    Tensor<double> empty;
    CHECK_FALSE(empty.defined());
    CHECK_THROWS_AS(empty.shape(), stob::ContractError);
    CHECK_THROWS_AS(empty.data(), stob::ContractError);
  }

  SUBCASE("item demands a single element") {
    Tensor<double> wide = Tensor<double>::zeros({3});
    CHECK_THROWS_AS(wide.item(), stob::ContractError);
    Tensor<double> one = Tensor<double>::from_data({1}, {5.0});
    CHECK(one.item() == 5.0);
  }

  SUBCASE("at validates its index") {
    CHECK_THROWS_AS(d.at({2, 0}), stob::ShapeError);
    CHECK_THROWS_AS(d.at({0}), stob::ShapeError);
  }
}

TEST_CASE("copies share storage; clones do not") {
  Tensor<double> a = Tensor<double>::from_data({2}, {1.0, 2.0});
  Tensor<double> b = a;  // handle copy
  CHECK(a.same_storage(b));
  b.mutable_data()[0] = 9.0;
  CHECK(a.at({0}) == 9.0);

  Tensor<double> c = a.clone();
  CHECK_FALSE(a.same_storage(c));
  c.mutable_data()[0] = 1.0;
  CHECK(a.at({0}) == 9.0);

  SUBCASE("clone keeps the grad flag but drops accumulated gradients") {
    a.set_requires_grad(true);
    std::vector<double> g{0.5, 0.5};
    a.accumulate_grad(g);
    Tensor<double> d = a.clone();
    CHECK(d.requires_grad());
    CHECK_FALSE(d.grad_allocated());
    CHECK(a.grad_allocated());
  }

  SUBCASE("detach_copy clears the grad flag") {
    a.set_requires_grad(true);
    Tensor<double> d = a.detach_copy();
    CHECK_FALSE(d.requires_grad());
    CHECK_FALSE(a.same_storage(d));
    CHECK(d.at({0}) == a.at({0}));
  }
}

TEST_CASE("gradient buffers accumulate lazily and reset cleanly") {
  Tensor<double> t = Tensor<double>::from_data({3}, {1.0, 2.0, 3.0}, true);
  CHECK(t.requires_grad());
  CHECK_FALSE(t.grad_allocated());
  CHECK_THROWS_AS(t.grad(), stob::ContractError);

  std::vector<double> g1{0.1, 0.2, 0.3};
  t.accumulate_grad(g1);
  REQUIRE(t.grad_allocated());
  CHECK(t.grad()[0] == 0.1);

  std::vector<double> g2{1.0, 1.0, 1.0};
  t.accumulate_grad(g2);
  CHECK(t.grad()[0] == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(t.grad()[2] == doctest::Approx(1.3).epsilon(1e-15));

  // Accumulation works through const handles: backward passes hold them.
  const Tensor<double> view = t;
  view.accumulate_grad(g2);
  CHECK(t.grad()[0] == doctest::Approx(2.1).epsilon(1e-15));

  t.zero_grad();
  CHECK_FALSE(t.grad_allocated());

  SUBCASE("the delta size must match") {
    std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(t.accumulate_grad(wrong), stob::ShapeError);
  }
}

TEST_CASE("all_finite spots poisoned values") {
  Tensor<double> ok = Tensor<double>::from_data({2}, {1.0, -2.0});
  CHECK(ok.all_finite());
  Tensor<double> with_nan = Tensor<double>::from_data(
      {2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_FALSE(with_nan.all_finite());
  Tensor<double> with_inf = Tensor<double>::from_data(
      {2}, {std::numeric_limits<double>::infinity(), 0.0});
  CHECK_FALSE(with_inf.all_finite());
}

// ---- random source ------------------------------------------------------------------

TEST_CASE("random streams are seed-deterministic and platform-pinned") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // The standard pins mt19937_64: the 10000th draw from seed 5489 is fixed.
  std::mt19937_64 reference(5489);
  Rng pinned(5489);
  std::uint64_t want = 0, got = 0;
  for (int i = 0; i < 10000; ++i) {
    want = reference();
    got = pinned.next_u64();
  }
  CHECK(got == want);
  CHECK(want == 9981545732273789042ULL);
}

TEST_CASE("uniform draws cover [0, 1) with 53-bit resolution") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);

  SUBCASE("the interval form is an affine map of the unit draw") {
    Rng x(7);
    Rng y(7);
    for (int i = 0; i < 50; ++i) {
      CHECK(x.uniform(-3.0, 5.0) ==
            doctest::Approx(-3.0 + 8.0 * y.uniform()).epsilon(1e-15));
    }
  }
}

TEST_CASE("normal draws have no hidden state and sane moments") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));

  // No cached spare: restoring the serialized state mid-stream reproduces
  // the remaining sequence exactly, normal draws included.
  Rng original(13);
  original.normal();
  original.uniform();
  const std::string snapshot = original.state();
  std::vector<double> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(original.normal());

  Rng restored(0);
  restored.set_state(snapshot);
  for (int i = 0; i < 10; ++i) CHECK(restored.normal() == expected[static_cast<std::size_t>(i)]);

  SUBCASE("mean and scale shift as requested") {
    Rng x(17);
    Rng y(17);
    for (int i = 0; i < 50; ++i) {
      CHECK(x.normal(10.0, 0.5) ==
            doctest::Approx(10.0 + 0.5 * y.normal()).epsilon(1e-12));
    }
  }

  SUBCASE("garbage state strings are rejected") {
    Rng x(1);
    CHECK_THROWS_AS(x.set_state("not a state"), stob::FormatError);
  }
}

TEST_CASE("index sampling and stream forking") {
  Rng rng(19);
  std::set<i64> seen;
  for (int i = 0; i < 1000; ++i) {
    const i64 k = rng.index(7);
    CHECK(k >= 0);
    CHECK(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);  // all residues reached
  CHECK_THROWS_AS(rng.index(0), stob::ContractError);

  SUBCASE("forked sub-streams differ from the parent and each other") {
    Rng parent(23);
    Rng fork_a(parent.fork(0));
    Rng fork_b(parent.fork(1));
    bool differ_ab = false, differ_pa = false;
    Rng parent_copy(23);
    for (int i = 0; i < 50; ++i) {
      const auto a = fork_a.next_u64();
      const auto b = fork_b.next_u64();
      if (a != b) differ_ab = true;
      if (a != parent_copy.next_u64()) differ_pa = true;
    }
    CHECK(differ_ab);
    CHECK(differ_pa);
  }

  SUBCASE("seed mixing spreads adjacent stream ids") {
    CHECK(stob::mix_seed(0, 0) != stob::mix_seed(0, 1));
    CHECK(stob::mix_seed(0, 0) != stob::mix_seed(1, 0));
    CHECK(stob::mix_seed(5, 2) == stob::mix_seed(5, 2));
  }
}

// ---- initializers ------------------------------------------------------------------

TEST_CASE("weight initializers honor their distributions") {
  Rng rng(29);

  SUBCASE("kaiming uniform stays within the analytic bound and fills it") {
    Tensor<double> w = Tensor<double>::zeros({4, 3, 3, 3});
    const i64 fan_in = 3 * 3 * 3;
    const double slope = 0.2;
    stob::fill_kaiming_uniform(w, rng, fan_in, slope);
    const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
    double widest = 0.0;
    for (double v : w.data()) {
      CHECK(std::abs(v) <= bound);
      widest = std::max(widest, std::abs(v));
    }
    CHECK(widest > 0.8 * bound);  // the range is actually exercised
  }

  SUBCASE("uniform fill respects its interval") {
    Tensor<double> t = Tensor<double>::zeros({1000});
    stob::fill_uniform(t, rng, 2.0, 3.0);
    for (double v : t.data()) {
      CHECK(v >= 2.0);
      CHECK(v < 3.0);
    }
  }

  SUBCASE("normal fill matches the explicit draw sequence") {
    Tensor<double> t = Tensor<double>::zeros({64});
    Rng x(31);
    stob::fill_normal(t, x, 1.0, 2.0);
    Rng y(31);
    for (double v : t.data()) {
      CHECK(v == y.normal(1.0, 2.0));
    }
  }

  SUBCASE("the dispatching fill routes by kind") {
    Tensor<double> a = Tensor<double>::zeros({32});
    Tensor<double> b = Tensor<double>::zeros({32});
    Rng x(37);
    Rng y(37);
    stob::fill_init(a, x, stob::InitKind::kUniform, 16, 0.2);
    stob::fill_uniform(b, y, -1.0, 1.0);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) CHECK(av[i] == bv[i]);
  }

  SUBCASE("init kinds round-trip through their names") {
    for (auto kind : {stob::InitKind::kNormal, stob::InitKind::kUniform,
                      stob::InitKind::kKaimingUniform}) {
      CHECK(stob::init_kind_from_string(stob::to_string(kind)) == kind);
    }
    CHECK_THROWS_AS(stob::init_kind_from_string("fancy"), stob::ConfigError);
  }
}
