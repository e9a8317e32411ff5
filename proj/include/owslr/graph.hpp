#pragma once

#include <functional>
#include <vector>

#include "owslr/tensor.hpp"

namespace owslr {

/// Define-by-run tape of differentiable operations.
///
/// Ops append a node only when at least one input tracks gradients, so a
/// graph fed with constants stays empty. A graph supports exactly one
/// backward pass; build a fresh one per step.
template <typename Scalar>
class Graph {
public:
    using BackwardFn = std::function<void()>;

    Graph() = default;
    /// A non-tracking graph records nothing; ops on it are plain evaluation.
    explicit Graph(bool tracking) : tracking_(tracking) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) noexcept = default;
    Graph& operator=(Graph&&) noexcept = default;

    void record(std::vector<TensorPtr<Scalar>> inputs, TensorPtr<Scalar> output, BackwardFn fn) {
        if (consumed_) {
            throw GraphError("cannot record onto a graph after backward");
        }
        nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
    }

    std::size_t size() const { return nodes_.size(); }
    bool tracking() const { return tracking_; }
    bool consumed() const { return consumed_; }

    /// Reverse sweep from a scalar loss. Gradients accumulate into every
    /// grad-tracking tensor reachable from the loss.
    void backward(const TensorPtr<Scalar>& loss) {
        if (consumed_) {
            throw GraphError("backward called twice on the same graph");
        }
        if (!loss || loss->size() != 1) {
            throw GraphError("backward requires a scalar loss");
        }
        if (!loss->requires_grad()) {
            consumed_ = true;
            return;
        }
        std::size_t last = nodes_.size();
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].output == loss) {
                last = i;
                break;
            }
        }
        if (last == nodes_.size()) {
            throw GraphError("loss was not produced by this graph");
        }
        consumed_ = true;
        loss->grad_buffer().setOnes();
        for (std::size_t i = last + 1; i-- > 0;) {
            const Node& node = nodes_[i];
            if (node.output->has_grad()) {
                node.backward();
            }
        }
    }

private:
    struct Node {
        std::vector<TensorPtr<Scalar>> inputs;
        TensorPtr<Scalar> output;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool tracking_ = true;
    bool consumed_ = false;
};

} // namespace owslr
