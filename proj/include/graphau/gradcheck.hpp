#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace graphau {

// Differentiable stages covered by central-finite-difference checking.
enum class GradStage { Backbone, AuHeads, Gnn, Cosine, Fuse, Classify, CeLoss, BceLoss };

std::vector<GradStage> all_grad_stages();
std::string to_string(GradStage stage);

struct GradCheckReport {
  double max_rel_err = 0;
  std::size_t coords = 0;
};

// Compares analytic gradients of the selected stage against central finite
// differences at 64-bit precision on down-scaled dimensions. Inputs are
// resampled until every ReLU pre-activation sits away from its kink.
GradCheckReport grad_check(GradStage stage, std::uint64_t seed, double step = 1e-5);

}  // namespace graphau
