#pragma once

// The full finite-difference suite: every differentiable kernel plus both
// networks end to end, at 64-bit.

#include "gid/gradcheck.hpp"

#include <cstdint>
#include <vector>

namespace gid::nn {

constexpr double kElementwiseTolerance = 1e-6;
constexpr double kAttentionTolerance = 1e-5;

/// Each entry uses at least 20 probes. Elementwise, matmul and rotation
/// kernels are held to 1e-6, attention and whole networks to 1e-5.
std::vector<GradCheckResult> gradient_suite(std::uint64_t seed = 1);

}  // namespace gid::nn
