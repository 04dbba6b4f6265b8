#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "loupe/graph.hpp"
#include "loupe/rng.hpp"

namespace loupe {

struct GradCheckRow {
  std::string layer;
  std::string tensor;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& r : rows) m = std::max(m, r.max_rel_err);
    return m;
  }
  bool pass(double tol) const { return max_rel_err() < tol; }
};

// Checks reverse-mode gradients of `build` against central finite
// differences at 64-bit. Every tensor in the store is perturbed entry by
// entry (inputs under test are registered in the store alongside the
// learnable parameters). The output is reduced to a scalar through a fixed
// random projection so a single backward covers all output entries.
// Relative error: |analytic - numeric| / max(1, |analytic|, |numeric|).
inline std::vector<GradCheckRow> check_gradients(
    const std::string& layer_name, ParamStore<double>& store,
    const std::function<Value<double>(Tape<double>&)>& build, double h = 1e-5,
    std::uint64_t projection_seed = 17) {
  Tape<double> tape;
  auto root = build(tape);

  Rng prng(projection_seed);
  Tensor<double> proj(root.tensor().shape);
  for (auto& v : proj.data) v = prng.gaussian();

  const auto project = [&proj](const Tensor<double>& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * proj.data[i];
    return s;
  };

  store.zero_grads();
  tape.backward(root, proj);  // d<out, proj>/d_out = proj

  std::vector<GradCheckRow> rows;
  for (Param<double>* p : store.all()) {
    GradCheckRow row{layer_name, p->name, 0.0};
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double keep = p->value.data[i];
      p->value.data[i] = keep + h;
      Tape<double> tp(false);
      const double fp = project(build(tp).tensor());
      p->value.data[i] = keep - h;
      Tape<double> tm(false);
      const double fm = project(build(tm).tensor());
      p->value.data[i] = keep;

      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad.data[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace loupe
