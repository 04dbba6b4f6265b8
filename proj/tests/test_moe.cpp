#include <doctest.h>

#include <cmath>

#include "loupe/gradcheck.hpp"
#include "loupe/moe.hpp"

using namespace loupe;

namespace {

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct MoeFixture {
  ParamStore<double> store;
  MoeLayer<double> layer;

  MoeFixture(std::size_t labels, std::size_t experts, bool null_expert, std::size_t dim,
             std::uint64_t seed) {
    Rng rng(seed);
    MoeConfig cfg;
    cfg.labels = labels;
    cfg.experts = experts;
    cfg.null_expert = null_expert;
    layer = MoeLayer<double>::create(store, "moe", cfg, dim, rng);
  }
};

}  // namespace

TEST_SUITE("moe") {
  TEST_CASE("single expert without null gate is per-label logistic regression") {
    MoeFixture fx(3, 1, false, 4, 50);
    Rng rng(51);
    const auto xt = gaussian_tensor<double>(rng, {2, 4}, 0.0, 1.0);
    Tape<double> t;
    auto p = fx.layer.forward(t, t.input(xt));
    const auto& w = fx.layer.expert_w->value;
    const auto& b = fx.layer.expert_b->value;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t l = 0; l < 3; ++l) {
        double z = b.at(l);
        for (std::size_t j = 0; j < 4; ++j) z += w.at(l, j) * xt.at(i, j);
        CHECK(p.tensor().at(i, l) == doctest::Approx(sigmoid_ref(z)).epsilon(1e-12));
      }
  }

  TEST_CASE("zero expert logits: p = 0.5 * (1 - null gate mass)") {
    MoeFixture fx(3, 2, true, 4, 52);
    fx.layer.expert_w->value.fill(0.0);
    fx.layer.expert_b->value.fill(0.0);
    Rng rng(53);
    const auto xt = gaussian_tensor<double>(rng, {1, 4}, 0.0, 1.0);
    Tape<double> t;
    auto p = fx.layer.forward(t, t.input(xt));

    const auto& gw = fx.layer.gate_w->value;
    const auto& gb = fx.layer.gate_b->value;
    for (std::size_t l = 0; l < 3; ++l) {
      std::vector<double> z(3);
      for (std::size_t g = 0; g < 3; ++g) {
        z[g] = gb.at(l * 3 + g);
        for (std::size_t j = 0; j < 4; ++j) z[g] += gw.at(l * 3 + g, j) * xt.at(0, j);
      }
      const double mx = std::max({z[0], z[1], z[2]});
      double denom = 0;
      for (auto v : z) denom += std::exp(v - mx);
      const double g_null = std::exp(z[2] - mx) / denom;
      CHECK(p.tensor().at(0, l) == doctest::Approx(0.5 * (1.0 - g_null)).epsilon(1e-12));
    }
  }

  TEST_CASE("random case matches the direct-summation oracle") {
    MoeFixture fx(3, 2, true, 5, 54);
    Rng rng(55);
    const auto xt = gaussian_tensor<double>(rng, {4, 5}, 0.0, 1.0);
    Tape<double> t;
    auto p = fx.layer.forward(t, t.input(xt));
    const std::size_t E = 2, G = 3;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t l = 0; l < 3; ++l) {
        std::vector<double> gz(G);
        for (std::size_t g = 0; g < G; ++g) {
          gz[g] = fx.layer.gate_b->value.at(l * G + g);
          for (std::size_t j = 0; j < 5; ++j)
            gz[g] += fx.layer.gate_w->value.at(l * G + g, j) * xt.at(i, j);
        }
        const double mx = *std::max_element(gz.begin(), gz.end());
        double denom = 0;
        for (auto v : gz) denom += std::exp(v - mx);
        double expect = 0;
        for (std::size_t e = 0; e < E; ++e) {
          double ez = fx.layer.expert_b->value.at(l * E + e);
          for (std::size_t j = 0; j < 5; ++j)
            ez += fx.layer.expert_w->value.at(l * E + e, j) * xt.at(i, j);
          expect += (std::exp(gz[e] - mx) / denom) * sigmoid_ref(ez);
        }
        CHECK(p.tensor().at(i, l) == doctest::Approx(expect).epsilon(1e-10));
      }
  }

  TEST_CASE("outputs live in [0, 1) and within expert bounds") {
    MoeFixture fx(4, 3, true, 6, 56);
    Rng rng(57);
    for (int trial = 0; trial < 30; ++trial) {
      const auto xt = gaussian_tensor<double>(rng, {2, 6}, 0.0, 2.0);
      Tape<double> t(false);
      auto p = fx.layer.forward(t, t.input(xt));
      for (auto v : p.tensor().data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }

  TEST_CASE("convexity: mixture lies inside (1 - g_null) * [min sigma, max sigma]") {
    MoeFixture fx(2, 3, true, 4, 58);
    Rng rng(59);
    const std::size_t E = 3, G = 4;
    for (int trial = 0; trial < 30; ++trial) {
      const auto xt = gaussian_tensor<double>(rng, {1, 4}, 0.0, 1.5);
      Tape<double> t(false);
      auto p = fx.layer.forward(t, t.input(xt));
      for (std::size_t l = 0; l < 2; ++l) {
        std::vector<double> gz(G);
        for (std::size_t g = 0; g < G; ++g) {
          gz[g] = fx.layer.gate_b->value.at(l * G + g);
          for (std::size_t j = 0; j < 4; ++j)
            gz[g] += fx.layer.gate_w->value.at(l * G + g, j) * xt.at(0, j);
        }
        const double mx = *std::max_element(gz.begin(), gz.end());
        double denom = 0;
        for (auto v : gz) denom += std::exp(v - mx);
        const double active = 1.0 - std::exp(gz[E] - mx) / denom;
        double smin = 1.0, smax = 0.0;
        for (std::size_t e = 0; e < E; ++e) {
          double ez = fx.layer.expert_b->value.at(l * E + e);
          for (std::size_t j = 0; j < 4; ++j)
            ez += fx.layer.expert_w->value.at(l * E + e, j) * xt.at(0, j);
          smin = std::min(smin, sigmoid_ref(ez));
          smax = std::max(smax, sigmoid_ref(ez));
        }
        CHECK(p.tensor().at(0, l) >= smin * active - 1e-12);
        CHECK(p.tensor().at(0, l) <= smax * active + 1e-12);
      }
    }
  }

  TEST_CASE("gradcheck: moe including gate parameters") {
    MoeFixture fx(3, 2, true, 4, 60);
    Rng rng(61);
    auto& x = fx.store.create("x", gaussian_tensor<double>(rng, {3, 4}, 0.0, 1.0));
    auto rows = check_gradients("moe", fx.store, [&](Tape<double>& t) {
      return fx.layer.forward(t, t.param(x));
    });
    for (const auto& r : rows) {
      CAPTURE(r.tensor);
      CHECK(r.max_rel_err < 1e-5);
    }
  }

  TEST_CASE("learnable count matches the closed form") {
    MoeFixture fx(5, 2, true, 7, 62);
    CHECK(fx.store.learnable_count() == 5 * 2 * 8 + 5 * 3 * 8);
    CHECK(fx.layer.learnable_count() == fx.store.learnable_count());
  }
}
