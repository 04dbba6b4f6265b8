#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "loupe/gradcheck.hpp"
#include "loupe/pooling.hpp"

using namespace loupe;

namespace {

Tensor<double> gauss(Rng& rng, std::vector<std::size_t> shape, double mean = 0.0,
                     double stddev = 1.0) {
  return gaussian_tensor<double>(rng, std::move(shape), mean, stddev);
}

// Reference softmax with max subtraction.
std::vector<double> softmax_ref(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] - mx);
    sum += e[i];
  }
  for (auto& v : e) v /= sum;
  return e;
}

std::vector<double> scores_of(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& b, std::size_t i) {
  std::vector<double> z(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    z[k] = b.at(k);
    for (std::size_t j = 0; j < w.cols(); ++j) z[k] += w.at(k, j) * x.at(i, j);
  }
  return z;
}

// Smallest top-2 score margin across rows; hard-assignment tests need a gap.
double min_margin(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  double margin = 1e300;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto z = scores_of(x, w, b, i);
    std::sort(z.begin(), z.end(), std::greater<>());
    if (z.size() > 1) margin = std::min(margin, z[0] - z[1]);
  }
  return margin;
}

Tensor<double> run_pool(PoolKind kind, const Tensor<double>& x, const Tensor<double>& w,
                        const Tensor<double>& b, const Tensor<double>& c,
                        const Tensor<double>& r) {
  Tape<double> t(false);
  auto xv = t.input(x);
  switch (kind) {
    case PoolKind::kBow: return pool_bow(xv, t.input(w), t.input(b)).tensor();
    case PoolKind::kNetVlad:
      return pool_netvlad(xv, t.input(w), t.input(b), t.input(c)).tensor();
    case PoolKind::kNetRVlad: return pool_netrvlad(xv, t.input(w), t.input(b)).tensor();
    case PoolKind::kNetFv:
      return pool_netfv(xv, t.input(w), t.input(b), t.input(c), t.input(r)).tensor();
    case PoolKind::kAverage: return pool_average(xv).tensor();
    case PoolKind::kMax: return pool_max(xv).tensor();
  }
  return {};
}

Tensor<double> permute_rows(const Tensor<double>& x, Rng& rng) {
  std::vector<std::size_t> perm(x.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  Tensor<double> out(x.shape);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(perm[i], j);
  return out;
}

}  // namespace

TEST_SUITE("pooling") {
  TEST_CASE("soft_assign: singleton cluster and uniform logits") {
    Rng rng(30);
    Tape<double> t;
    auto x = t.input(gauss(rng, {5, 3}));
    auto a1 = soft_assign(x, t.input(Tensor<double>({1, 3})), t.input(Tensor<double>({1})));
    for (auto v : a1.tensor().data) CHECK(v == 1.0);

    auto a4 = soft_assign(x, t.input(Tensor<double>({4, 3})), t.input(Tensor<double>({4})));
    for (auto v : a4.tensor().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }

  TEST_CASE("soft_assign: random case matches softmax oracle, rows sum to one") {
    Rng rng(31);
    const auto xt = gauss(rng, {3, 2});
    const auto wt = gauss(rng, {4, 2});
    const auto bt = gauss(rng, {4});
    Tape<double> t;
    auto a = soft_assign(t.input(xt), t.input(wt), t.input(bt));
    for (std::size_t i = 0; i < 3; ++i) {
      const auto ref = softmax_ref(scores_of(xt, wt, bt, i));
      double row = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(a.tensor().at(i, k) == doctest::Approx(ref[k]).epsilon(1e-12));
        CHECK(a.tensor().at(i, k) > 0.0);
        CHECK(a.tensor().at(i, k) < 1.0);
        row += a.tensor().at(i, k);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("soft_assign: temperature sharpening drives rows one-hot") {
    Rng rng(32);
    Tensor<double> xt, wt, bt;
    do {
      xt = gauss(rng, {6, 4});
      wt = gauss(rng, {5, 4});
      bt = gauss(rng, {5});
    } while (min_margin(xt, wt, bt) < 0.05);
    Tensor<double> ws = wt, bs = bt;
    for (auto& v : ws.data) v *= 1e3;
    for (auto& v : bs.data) v *= 1e3;
    Tape<double> t;
    auto a = soft_assign(t.input(xt), t.input(ws), t.input(bs));
    for (std::size_t i = 0; i < 6; ++i) {
      double mx = 0;
      for (std::size_t k = 0; k < 5; ++k) mx = std::max(mx, a.tensor().at(i, k));
      CHECK(mx > 1.0 - 1e-6);
    }
  }

  TEST_CASE("pool_bow: trivial cases and mass conservation") {
    Rng rng(33);
    const auto xt = gauss(rng, {7, 3});
    Tape<double> t;
    auto one = pool_bow(t.input(xt), t.input(Tensor<double>({1, 3})), t.input(Tensor<double>({1})));
    CHECK(one.tensor().at(0) == doctest::Approx(7.0).epsilon(1e-12));

    const auto x8 = gauss(rng, {8, 3});
    auto uni = pool_bow(t.input(x8), t.input(Tensor<double>({4, 3})), t.input(Tensor<double>({4})));
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(uni.tensor().at(k) == doctest::Approx(2.0).epsilon(1e-12));

    const auto wt = gauss(rng, {4, 3});
    const auto bt = gauss(rng, {4});
    auto h = pool_bow(t.input(x8), t.input(wt), t.input(bt));
    double total = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(h.tensor().at(k) >= 0.0);
      total += h.tensor().at(k);
    }
    CHECK(total == doctest::Approx(8.0).epsilon(1e-6));
  }

  TEST_CASE("pool_bow: hard-assignment limit reproduces the integer histogram") {
    Rng rng(34);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor<double> xt, wt, bt;
      do {
        xt = gauss(rng, {10, 4});
        wt = gauss(rng, {3, 4});
        bt = gauss(rng, {3});
      } while (min_margin(xt, wt, bt) < 0.05);
      std::vector<double> hist(3, 0.0);
      for (std::size_t i = 0; i < 10; ++i) {
        const auto z = scores_of(xt, wt, bt, i);
        hist[std::max_element(z.begin(), z.end()) - z.begin()] += 1.0;
      }
      Tensor<double> ws = wt, bs = bt;
      for (auto& v : ws.data) v *= 1e3;
      for (auto& v : bs.data) v *= 1e3;
      Tape<double> t;
      auto h = pool_bow(t.input(xt), t.input(ws), t.input(bs));
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(h.tensor().at(k) == doctest::Approx(hist[k]).epsilon(1e-4));
    }
  }

  TEST_CASE("pool_netvlad: zero residuals and single-frame case") {
    Rng rng(35);
    Tensor<double> crow = gauss(rng, {1, 3});
    Tensor<double> c({2, 3});
    Tensor<double> x({4, 3});
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < 3; ++j) c.at(k, j) = crow.at(0, j);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) x.at(i, j) = crow.at(0, j);
    Tape<double> t;
    auto v = pool_netvlad(t.input(x), t.input(gauss(rng, {2, 3})), t.input(gauss(rng, {2})),
                          t.input(c));
    for (auto e : v.tensor().data) CHECK(std::abs(e) < 1e-12);

    const auto x1 = gauss(rng, {1, 3});
    const auto c1 = gauss(rng, {1, 3});
    auto v1 = pool_netvlad(t.input(x1), t.input(gauss(rng, {1, 3})), t.input(gauss(rng, {1})),
                           t.input(c1));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(v1.tensor().at(j) == doctest::Approx(x1.at(0, j) - c1.at(0, j)).epsilon(1e-12));
  }

  TEST_CASE("pool_netvlad: hard-assignment limit matches classical VLAD") {
    Rng rng(36);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor<double> xt, wt, bt;
      do {
        xt = gauss(rng, {9, 4});
        wt = gauss(rng, {3, 4});
        bt = gauss(rng, {3});
      } while (min_margin(xt, wt, bt) < 0.05);
      const auto ct = gauss(rng, {3, 4});
      Tensor<double> ref({3, 4});
      for (std::size_t i = 0; i < 9; ++i) {
        const auto z = scores_of(xt, wt, bt, i);
        const std::size_t k = std::max_element(z.begin(), z.end()) - z.begin();
        for (std::size_t j = 0; j < 4; ++j) ref.at(k, j) += xt.at(i, j) - ct.at(k, j);
      }
      Tensor<double> ws = wt, bs = bt;
      for (auto& v : ws.data) v *= 1e3;
      for (auto& v : bs.data) v *= 1e3;
      Tape<double> t;
      auto v = pool_netvlad(t.input(xt), t.input(ws), t.input(bs), t.input(ct));
      for (std::size_t e = 0; e < 12; ++e)
        CHECK(v.tensor().data[e] == doctest::Approx(ref.data[e]).epsilon(1e-4));
    }
  }

  TEST_CASE("pool_netrvlad: singleton cluster sums descriptors; zero input") {
    Rng rng(37);
    const auto xt = gauss(rng, {6, 3});
    Tape<double> t;
    auto v = pool_netrvlad(t.input(xt), t.input(Tensor<double>({1, 3})),
                           t.input(Tensor<double>({1})));
    for (std::size_t j = 0; j < 3; ++j) {
      double sum = 0;
      for (std::size_t i = 0; i < 6; ++i) sum += xt.at(i, j);
      CHECK(v.tensor().at(j) == doctest::Approx(sum).epsilon(1e-12));
    }
    auto z = pool_netrvlad(t.input(Tensor<double>({4, 3})), t.input(gauss(rng, {2, 3})),
                           t.input(gauss(rng, {2})));
    for (auto e : z.tensor().data) CHECK(e == 0.0);
  }

  TEST_CASE("pool_netvlad with zero anchors equals pool_netrvlad exactly") {
    Rng rng(38);
    for (int trial = 0; trial < 50; ++trial) {
      const auto xt = gauss(rng, {8, 5});
      const auto wt = gauss(rng, {4, 5});
      const auto bt = gauss(rng, {4});
      Tape<double> t(false);
      auto a = pool_netvlad(t.input(xt), t.input(wt), t.input(bt),
                            t.input(Tensor<double>({4, 5})));
      auto b = pool_netrvlad(t.input(xt), t.input(wt), t.input(bt));
      for (std::size_t e = 0; e < 20; ++e)
        CHECK(std::abs(a.tensor().data[e] - b.tensor().data[e]) < 1e-12);
    }
  }

  TEST_CASE("pool_netfv: zero residuals leave only the minus-mass term") {
    Rng rng(39);
    const std::size_t K = 2, D = 3, N = 5;
    Tensor<double> crow = gauss(rng, {1, D});
    Tensor<double> c({K, D}), x({N, D});
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < D; ++j) c.at(k, j) = crow.at(0, j);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < D; ++j) x.at(i, j) = crow.at(0, j);
    const auto wt = gauss(rng, {K, D});
    const auto bt = gauss(rng, {K});
    Tensor<double> r = Tensor<double>::full({K, D}, std::sqrt(1.0 - kCovarianceFloor));
    Tape<double> t;
    auto xv = t.input(x);
    auto assign = soft_assign(xv, t.input(wt), t.input(bt));
    auto fv = pool_netfv(xv, t.input(wt), t.input(bt), t.input(c), t.input(r));
    // FV1 zero, FV2(k, j) = -(assignment mass of cluster k)
    for (std::size_t e = 0; e < K * D; ++e) CHECK(std::abs(fv.tensor().data[e]) < 1e-9);
    for (std::size_t k = 0; k < K; ++k) {
      double mass = 0;
      for (std::size_t i = 0; i < N; ++i) mass += assign.tensor().at(i, k);
      for (std::size_t j = 0; j < D; ++j)
        CHECK(fv.tensor().data[K * D + k * D + j] == doctest::Approx(-mass).epsilon(1e-9));
    }
  }

  TEST_CASE("pool_netfv: K=1, N=1 with unit sigma") {
    Rng rng(40);
    const auto x1 = gauss(rng, {1, 4});
    const auto c1 = gauss(rng, {1, 4});
    Tensor<double> r = Tensor<double>::full({1, 4}, std::sqrt(1.0 - kCovarianceFloor));
    Tape<double> t;
    auto fv = pool_netfv(t.input(x1), t.input(gauss(rng, {1, 4})), t.input(gauss(rng, {1})),
                         t.input(c1), t.input(r));
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = x1.at(0, j) - c1.at(0, j);
      CHECK(fv.tensor().at(j) == doctest::Approx(d).epsilon(1e-9));
      CHECK(fv.tensor().at(4 + j) == doctest::Approx(d * d - 1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("pool_netfv: random case matches the direct-summation oracle") {
    Rng rng(41);
    const std::size_t K = 3, D = 4, N = 6;
    const auto xt = gauss(rng, {N, D});
    const auto wt = gauss(rng, {K, D});
    const auto bt = gauss(rng, {K});
    const auto ct = gauss(rng, {K, D});
    const auto rt = gauss(rng, {K, D}, 1.0, 0.1);
    Tape<double> t;
    auto fv = pool_netfv(t.input(xt), t.input(wt), t.input(bt), t.input(ct), t.input(rt));

    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < D; ++j) {
        double fv1 = 0, fv2 = 0;
        const double sigma = rt.at(k, j) * rt.at(k, j) + kCovarianceFloor;
        for (std::size_t i = 0; i < N; ++i) {
          const double a = softmax_ref(scores_of(xt, wt, bt, i))[k];
          const double z = (xt.at(i, j) - ct.at(k, j)) / sigma;
          fv1 += a * z;
          fv2 += a * (z * z - 1.0);
        }
        CHECK(fv.tensor().data[k * D + j] == doctest::Approx(fv1).epsilon(1e-6));
        CHECK(fv.tensor().data[K * D + k * D + j] == doctest::Approx(fv2).epsilon(1e-6));
      }
  }

  TEST_CASE("average and max pooling") {
    Tape<double> t;
    const auto single = Tensor<double>({1, 2}, {3.0, -1.0});
    CHECK(pool_average(t.input(single)).tensor().data == std::vector<double>{3.0, -1.0});
    CHECK(pool_max(t.input(single)).tensor().data == std::vector<double>{3.0, -1.0});

    const auto two = Tensor<double>({2, 2}, {0.0, 2.0, 2.0, 0.0});
    CHECK(pool_average(t.input(two)).tensor().data == std::vector<double>{1.0, 1.0});
    CHECK(pool_max(t.input(two)).tensor().data == std::vector<double>{2.0, 2.0});

    Rng rng(42);
    const auto xt = gauss(rng, {9, 5});
    auto avg = pool_average(t.input(xt));
    auto mx = pool_max(t.input(xt));
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0, m = xt.at(0, j);
      for (std::size_t i = 0; i < 9; ++i) {
        s += xt.at(i, j);
        m = std::max(m, xt.at(i, j));
      }
      CHECK(avg.tensor().at(j) == doctest::Approx(s / 9.0).epsilon(1e-12));
      CHECK(mx.tensor().at(j) == m);
    }
  }

  TEST_CASE("average and max reject an empty batch") {
    Tape<double> t;
    auto empty = t.input(Tensor<double>({0, 3}));
    CHECK_THROWS_AS(pool_average(empty), Error);
    CHECK_THROWS_AS(pool_max(empty), Error);
  }

  TEST_CASE("normalize_pooled: unit vector unchanged, zero vector stays zero") {
    Tape<double> t;
    auto unit = t.input(Tensor<double>::vec({0.6, 0.8}));
    auto n1 = normalize_pooled(unit, NormScheme::kIntraGlobalL2, 0);
    CHECK(n1.tensor().at(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n1.tensor().at(1) == doctest::Approx(0.8).epsilon(1e-12));

    auto zero = t.input(Tensor<double>({6}));
    auto n2 = normalize_pooled(zero, NormScheme::kIntraGlobalL2, 3);
    for (auto v : n2.tensor().data) {
      CHECK(v == 0.0);
      CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("normalize_pooled: two-stage oracle on K=2, D=3") {
    Rng rng(43);
    const auto vt = gauss(rng, {6});
    Tape<double> t;
    auto n = normalize_pooled(t.input(vt), NormScheme::kIntraGlobalL2, 3);

    std::vector<double> stage(6);
    for (std::size_t b = 0; b < 2; ++b) {
      double nrm = 0;
      for (std::size_t j = 0; j < 3; ++j) nrm += vt.at(b * 3 + j) * vt.at(b * 3 + j);
      nrm = std::sqrt(nrm);
      for (std::size_t j = 0; j < 3; ++j) stage[b * 3 + j] = vt.at(b * 3 + j) / nrm;
    }
    double g = 0;
    for (auto v : stage) g += v * v;
    g = std::sqrt(g);
    for (std::size_t e = 0; e < 6; ++e)
      CHECK(n.tensor().at(e) == doctest::Approx(stage[e] / g).epsilon(1e-12));
  }

  TEST_CASE("permutation invariance of every orderless pooling") {
    Rng rng(44);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t N = 5 + rng.below(8), D = 4, K = 3;
      const auto xt = gauss(rng, {N, D});
      const auto wt = gauss(rng, {K, D});
      const auto bt = gauss(rng, {K});
      const auto ct = gauss(rng, {K, D});
      const auto rt = gauss(rng, {K, D}, 1.0, 0.1);
      const auto xp = permute_rows(xt, rng);
      for (PoolKind kind : {PoolKind::kBow, PoolKind::kNetVlad, PoolKind::kNetRVlad,
                            PoolKind::kNetFv, PoolKind::kAverage, PoolKind::kMax}) {
        const auto a = run_pool(kind, xt, wt, bt, ct, rt);
        const auto b = run_pool(kind, xp, wt, bt, ct, rt);
        for (std::size_t e = 0; e < a.numel(); ++e)
          CHECK(std::abs(a.data[e] - b.data[e]) < 1e-6);
      }
    }
  }

  TEST_CASE("duplication homogeneity: doubling the batch doubles the output") {
    Rng rng(45);
    const std::size_t N = 6, D = 4, K = 3;
    const auto xt = gauss(rng, {N, D});
    Tensor<double> x2({2 * N, D});
    std::copy(xt.data.begin(), xt.data.end(), x2.data.begin());
    std::copy(xt.data.begin(), xt.data.end(), x2.data.begin() + xt.numel());
    const auto wt = gauss(rng, {K, D});
    const auto bt = gauss(rng, {K});
    const auto ct = gauss(rng, {K, D});
    const auto rt = gauss(rng, {K, D}, 1.0, 0.1);
    for (PoolKind kind :
         {PoolKind::kBow, PoolKind::kNetVlad, PoolKind::kNetRVlad, PoolKind::kNetFv}) {
      const auto a = run_pool(kind, xt, wt, bt, ct, rt);
      const auto b = run_pool(kind, x2, wt, bt, ct, rt);
      for (std::size_t e = 0; e < a.numel(); ++e)
        CHECK(b.data[e] == doctest::Approx(2.0 * a.data[e]).epsilon(1e-9));
    }
  }

  TEST_CASE("gradcheck: all pooling layers incl. w, b, c, r at 1e-5") {
    for (PoolKind kind : {PoolKind::kBow, PoolKind::kNetVlad, PoolKind::kNetRVlad,
                          PoolKind::kNetFv, PoolKind::kAverage, PoolKind::kMax}) {
      for (NormScheme scheme : {NormScheme::kNone, NormScheme::kIntraGlobalL2}) {
        Rng rng(46 + static_cast<int>(kind));
        PoolingConfig cfg;
        cfg.kind = kind;
        cfg.clusters = 3;
        cfg.dim = 4;
        cfg.normalization = scheme;
        ParamStore<double> store;
        auto layer = PoolingLayer<double>::create(store, "pool", cfg, rng);
        auto& x = store.create("x", gauss(rng, {5, 4}));
        auto rows = check_gradients(pool_kind_name(kind), store, [&](Tape<double>& t) {
          return layer.forward(t, t.param(x));
        });
        for (const auto& r : rows) {
          CAPTURE(pool_kind_name(kind));
          CAPTURE(r.tensor);
          CHECK(r.max_rel_err < 1e-5);
        }
      }
    }
  }
}
