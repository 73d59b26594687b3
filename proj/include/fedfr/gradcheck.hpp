#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedfr/tensor.hpp"

namespace fedfr {

// Central-difference verification of the tape's reverse pass. The comparison
// uses relative error with the denominator floored at kGradDenomFloor, so
// near-zero coordinates are held to an absolute tolerance of
// kGradTolerance * kGradDenomFloor.
inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kGradDenomFloor = 1e-3;

// Evaluates a scalar function of a parameter list; when grads is non-null the
// analytic gradients are written there (one matrix per parameter).
using TapedFunction =
    std::function<double(const std::vector<Matrix>& params, std::vector<Matrix>* grads)>;

// Max relative error over all coordinates of all parameters.
double max_gradient_error(const TapedFunction& fn, const std::vector<Matrix>& params,
                          double step = kGradStep);

struct GradCheckResult {
    std::string name;
    int instances = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

// The finite-difference suite over every training objective and the backbone
// forward pass, on seeded random instances with entries in [-1, 1].
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int instances_per_check);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace fedfr
