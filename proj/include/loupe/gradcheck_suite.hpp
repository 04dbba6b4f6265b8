#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace loupe {

struct LayerCheck {
  std::string layer;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Gradient checks for every layer in the library, at 64-bit with central
// differences (h = 1e-5), plus a whole tiny model. Tolerances: 1e-6 for the
// linear layer, 1e-5 per layer, 1e-4 for the full model.
std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed = 1);

}  // namespace loupe
