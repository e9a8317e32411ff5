#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "owslr/tensor.hpp"

namespace owslr {

/// Per-parameter moment estimates for Adam, index-aligned with the parameter
/// list it was created from.
template <typename Scalar>
struct AdamState {
    using Array = typename Tensor<Scalar>::Array;

    std::vector<Array> m;
    std::vector<Array> v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;

    explicit AdamState(const std::vector<TensorPtr<Scalar>>& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto& p : params) {
            m.push_back(Array::Zero(static_cast<Eigen::Index>(p->size())));
            v.push_back(Array::Zero(static_cast<Eigen::Index>(p->size())));
        }
    }
};

/// One bias-corrected Adam update in place; clears the gradients afterwards.
template <typename Scalar>
void adam_step(const std::vector<TensorPtr<Scalar>>& params, AdamState<Scalar>& state, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw NumericError("adam_step: learning rate must be a positive finite number");
    }
    if (params.size() != state.m.size() || params.size() != state.v.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->has_grad()) {
            throw GraphError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        }
        if (static_cast<std::size_t>(state.m[i].size()) != params[i]->size()) {
            throw ShapeError("adam_step: moment size mismatch for parameter " + std::to_string(i));
        }
    }

    ++state.t;
    const auto b1 = static_cast<Scalar>(state.beta1);
    const auto b2 = static_cast<Scalar>(state.beta2);
    const auto eps = static_cast<Scalar>(state.epsilon);
    const auto step = static_cast<double>(state.t);
    const auto correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, step));
    const auto correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, step));
    const auto rate = static_cast<Scalar>(lr);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = p.grad();
        state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.square();
        p.data() -= rate * (state.m[i] / correction1) / ((state.v[i] / correction2).sqrt() + eps);
        if (!p.data().allFinite()) {
            throw NumericError("adam_step: parameter " + std::to_string(i) + " became non-finite");
        }
        p.clear_grad();
    }
}

} // namespace owslr
