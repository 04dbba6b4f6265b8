#include <doctest.h>

#include <cmath>

#include "loupe/metrics.hpp"
#include "loupe/rng.hpp"
#include "oracles.hpp"

using namespace loupe;

TEST_SUITE("metrics") {
  TEST_CASE("topk: sort oracle, tie-break and k clamping") {
    const std::vector<double> s{0.1, 0.9, 0.4, 0.7};
    auto t2 = topk(s, 2);
    CHECK(t2[0].label == 1);
    CHECK(t2[1].label == 3);

    auto ties = topk({0.5, 0.5, 0.5, 0.5}, 3);
    CHECK(ties[0].label == 0);
    CHECK(ties[1].label == 1);
    CHECK(ties[2].label == 2);

    auto full = topk(s, 4);
    CHECK(full.size() == 4);
    CHECK(full[3].label == 0);

    CHECK(topk(s, 10).size() == 4);
  }

  TEST_CASE("gap: single video, single true label ranked first") {
    GapAccumulator acc;
    acc.add_video({0.9, 0.2, 0.1}, {0});
    CHECK(acc.value() == 1.0);
  }

  TEST_CASE("gap: two true labels at ranks 1 and 3") {
    GapAccumulator acc;
    acc.add_video({0.9, 0.5, 0.7, 0.1}, {0, 1});
    CHECK(acc.value() == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  }

  TEST_CASE("gap: one positive ranked last among 20") {
    std::vector<double> p(20);
    for (std::size_t l = 0; l < 20; ++l) p[l] = 1.0 - 0.01 * static_cast<double>(l);
    GapAccumulator acc;
    acc.add_video(p, {19});
    CHECK(acc.value() == doctest::Approx(0.05).epsilon(1e-12));
  }

  TEST_CASE("gap: empty dataset is an error") {
    GapAccumulator acc;
    CHECK_THROWS_AS(acc.value(), Error);
  }

  TEST_CASE("gap: positives capped at 20 per video") {
    std::vector<double> p(30);
    std::vector<std::uint32_t> t;
    for (std::uint32_t l = 0; l < 30; ++l) {
      p[l] = 1.0 - 0.01 * static_cast<double>(l);
      t.push_back(l);  // all 30 relevant; only 20 pooled and only 20 counted
    }
    GapAccumulator acc;
    acc.add_video(p, t);
    CHECK(acc.value() == 1.0);
  }

  TEST_CASE("gap agrees with brute-force oracle on 1000 random instances") {
    Rng rng(71);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto inst = random_gap_instance(rng);
      const double got = gap_at_20(inst.preds, inst.truths);
      const double want = gap_oracle(inst.preds, inst.truths);
      CHECK(std::abs(got - want) <= 1e-12);
      CHECK(got >= 0.0);
      CHECK(got <= 1.0);
    }
  }

  TEST_CASE("gap is exactly invariant under strictly monotone transforms") {
    Rng rng(72);
    for (int trial = 0; trial < 200; ++trial) {
      const auto inst = random_gap_instance(rng);
      const double base = gap_at_20(inst.preds, inst.truths);
      auto affine = inst.preds;
      auto cubed = inst.preds;
      for (auto& v : affine)
        for (auto& x : v) x = 0.5 * x + 0.25;
      for (auto& v : cubed)
        for (auto& x : v) x = (x + 0.5) * (x + 0.5) * (x + 0.5);
      CHECK(gap_at_20(affine, inst.truths) == base);
      CHECK(gap_at_20(cubed, inst.truths) == base);
    }
  }

  TEST_CASE("gap is 1 iff every relevant pair outranks every irrelevant one") {
    GapAccumulator perfect;
    perfect.add_video({0.9, 0.8, 0.1, 0.05}, {0, 1});
    perfect.add_video({0.95, 0.2, 0.3, 0.01}, {0});
    CHECK(perfect.value() == 1.0);

    GapAccumulator broken;
    broken.add_video({0.9, 0.8, 0.85, 0.05}, {0, 1});
    CHECK(broken.value() < 1.0);
  }

  TEST_CASE("merge reproduces sequential accumulation") {
    Rng rng(73);
    const auto inst = random_gap_instance(rng, 8, 25);
    GapAccumulator whole;
    for (std::size_t v = 0; v < inst.preds.size(); ++v)
      whole.add_video(inst.preds[v], inst.truths[v]);

    GapAccumulator left, right;
    const std::size_t half = inst.preds.size() / 2;
    for (std::size_t v = 0; v < half; ++v) left.add_video(inst.preds[v], inst.truths[v]);
    for (std::size_t v = half; v < inst.preds.size(); ++v)
      right.add_video(inst.preds[v], inst.truths[v]);
    left.merge(right);
    CHECK(left.value() == whole.value());
    CHECK(left.videos() == whole.videos());
  }

  TEST_CASE("per-label AP basics") {
    std::vector<std::vector<double>> preds{{0.9, 0.1, 0.4}, {0.2, 0.8, 0.6}, {0.7, 0.3, 0.5}};
    std::vector<std::vector<std::uint32_t>> truths{{0}, {1}, {0}};
    CHECK(per_label_ap(preds, truths, 0) == 1.0);
    CHECK(per_label_ap(preds, truths, 1) == 1.0);
    CHECK(per_label_ap(preds, truths, 2) == 0.0);  // label 2 never relevant
  }
}
