#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "owslr/graph.hpp"
#include "owslr/tensor.hpp"

namespace owslr {

struct GradCheckResult {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;

    bool passed() const { return max_rel_error <= tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-3). The floor keeps entries whose true
/// gradient is zero from turning rounding noise into a large ratio.
inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

using LossFn = std::function<TensorPtr<double>(Graph<double>&)>;

/// Largest relative error between reverse-mode gradients of `loss` and
/// central finite differences (step h) over every entry of `inputs`.
/// Inputs must track gradients; their values are restored afterwards.
double max_gradient_error(const LossFn& loss, const std::vector<TensorPtr<double>>& inputs, double h = 1e-6);

/// Every differentiable op plus backbone, decoder and end-to-end pipeline
/// checks, `instances` seeded random cases each.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t instances = 20);

} // namespace owslr
