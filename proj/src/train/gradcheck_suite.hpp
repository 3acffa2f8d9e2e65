#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rsg::train {

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStep = 1e-6;

struct GradcheckEntry {
  std::string name;  // cesc, mv, cross_entropy, focal, total
  double max_error = 0.0;
  std::size_t coordinates = 0;
};

/// Finite-difference check of every loss on a toy problem with D=4, 2x2
/// feature maps, K=3 centers and a batch of 8. All stop-gradients are lifted
/// so the analytic gradient is the true derivative of each loss.
std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed,
                                                double step = kGradcheckStep);

}  // namespace rsg::train
