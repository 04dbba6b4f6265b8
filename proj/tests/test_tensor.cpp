#include <doctest.h>

#include "loupe/rng.hpp"
#include "loupe/tensor.hpp"

using namespace loupe;

TEST_SUITE("tensor") {
  TEST_CASE("shape and data agree") {
    Tensor<double> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 5.0;
    CHECK(t.data[5] == 5.0);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), ShapeError);
  }

  TEST_CASE("identity and fill") {
    auto id = Tensor<double>::identity(3);
    CHECK(id.at(0, 0) == 1.0);
    CHECK(id.at(0, 1) == 0.0);
    auto f = Tensor<float>::full({4}, 2.5f);
    for (auto v : f.data) CHECK(v == 2.5f);
  }

  TEST_CASE("finite check") {
    Tensor<double> t({2});
    CHECK(t.all_finite());
    t.at(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK(!t.all_finite());
  }

  TEST_CASE("cast preserves values") {
    auto t = Tensor<double>::vec({1.5, -2.0, 0.25});
    auto f = t.cast<float>();
    CHECK(f.data[0] == 1.5f);
    CHECK(f.data[2] == 0.25f);
  }

  TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42);
    auto f1 = c.fork(1), f2 = c.fork(2);
    CHECK(f1.next_u64() != f2.next_u64());
  }

  TEST_CASE("rng uniform range and below bound") {
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(r.below(10) < 10);
    }
  }

  TEST_CASE("rng gaussian moments") {
    Rng r(11);
    double sum = 0, sumsq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double g = r.gaussian();
      sum += g;
      sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
  }
}
