#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmah {

struct GradcheckResult {
  std::string family;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
};

// Analytic gradients against central finite differences for every network
// family: goal-conditioned Q networks (ReLU and tanh), the A2C policy and
// value heads, the autoencoder with its reward head, the mixer, and the
// joint TD loss through the mixer into a high-level network.
std::vector<GradcheckResult> gradient_integrity(const std::vector<std::uint64_t>& seeds, int trials = 2);

}  // namespace gmah
