#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "owslr/graph.hpp"
#include "owslr/tensor.hpp"

// Differentiable operations. Every op takes the graph it records onto as the
// first argument and returns a fresh tensor; inputs are never modified.
// There is no implicit broadcasting: shape alignment goes through tile(),
// bias_add() or reshape() explicitly.

namespace owslr {

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> as_matrix(typename Tensor<Scalar>::Array& a, std::size_t rows, std::size_t cols) {
    return {a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> as_matrix(const typename Tensor<Scalar>::Array& a, std::size_t rows,
                                              std::size_t cols) {
    return {a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename Scalar>
TensorPtr<Scalar> make_output(const char* op, Shape shape, typename Tensor<Scalar>::Array data, bool tracked) {
    if (!data.allFinite()) {
        throw NumericError(std::string(op) + ": produced a non-finite value");
    }
    return std::make_shared<Tensor<Scalar>>(std::move(shape), std::move(data), tracked);
}

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
}

template <typename Scalar>
void accumulate(Tensor<Scalar>& t, const typename Tensor<Scalar>::Array& g) {
    if (t.requires_grad()) {
        t.grad_buffer() += g;
    }
}

} // namespace detail

template <typename Scalar>
TensorPtr<Scalar> add(Graph<Scalar>& g, const TensorPtr<Scalar>& a, const TensorPtr<Scalar>& b) {
    detail::require_same_shape("add", a->shape(), b->shape());
    const bool tracked = g.tracking() && (a->requires_grad() || b->requires_grad());
    auto out = detail::make_output<Scalar>("add", a->shape(), a->data() + b->data(), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        auto* pb = b.get();
        g.record({a, b}, out, [o, pa, pb] {
            detail::accumulate(*pa, o->grad());
            detail::accumulate(*pb, o->grad());
        });
    }
    return out;
}

template <typename Scalar>
TensorPtr<Scalar> mul(Graph<Scalar>& g, const TensorPtr<Scalar>& a, const TensorPtr<Scalar>& b) {
    detail::require_same_shape("mul", a->shape(), b->shape());
    const bool tracked = g.tracking() && (a->requires_grad() || b->requires_grad());
    auto out = detail::make_output<Scalar>("mul", a->shape(), a->data() * b->data(), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        auto* pb = b.get();
        g.record({a, b}, out, [o, pa, pb] {
            if (pa->requires_grad()) {
                pa->grad_buffer() += o->grad() * pb->data();
            }
            if (pb->requires_grad()) {
                pb->grad_buffer() += o->grad() * pa->data();
            }
        });
    }
    return out;
}

template <typename Scalar>
TensorPtr<Scalar> relu(Graph<Scalar>& g, const TensorPtr<Scalar>& a) {
    const bool tracked = g.tracking() && (a->requires_grad());
    auto out = detail::make_output<Scalar>("relu", a->shape(), a->data().max(Scalar(0)), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa] {
            pa->grad_buffer() += (pa->data() > Scalar(0)).select(o->grad(), Scalar(0));
        });
    }
    return out;
}

/// Multiplication by a fixed constant.
template <typename Scalar>
TensorPtr<Scalar> scale(Graph<Scalar>& g, const TensorPtr<Scalar>& a, Scalar factor) {
    const bool tracked = g.tracking() && (a->requires_grad());
    auto out = detail::make_output<Scalar>("scale", a->shape(), a->data() * factor, tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa, factor] { pa->grad_buffer() += o->grad() * factor; });
    }
    return out;
}

enum class ElementwiseOp { Add, Mul, Relu };

template <typename Scalar>
TensorPtr<Scalar> elementwise(Graph<Scalar>& g, ElementwiseOp op, const TensorPtr<Scalar>& a,
                              const TensorPtr<Scalar>& b = nullptr) {
    if (op == ElementwiseOp::Relu) {
        return relu(g, a);
    }
    if (!b) {
        throw ShapeError("elementwise: binary op needs two operands");
    }
    return op == ElementwiseOp::Add ? add(g, a, b) : mul(g, a, b);
}

/// [m x k] * [k x n] -> [m x n].
template <typename Scalar>
TensorPtr<Scalar> matmul(Graph<Scalar>& g, const TensorPtr<Scalar>& a, const TensorPtr<Scalar>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_string(a->shape()) + " by " +
                         shape_string(b->shape()));
    }
    const std::size_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    typename Tensor<Scalar>::Array data(static_cast<Eigen::Index>(m * n));
    detail::as_matrix<Scalar>(data, m, n).noalias() =
        detail::as_matrix<Scalar>(a->data(), m, k) * detail::as_matrix<Scalar>(b->data(), k, n);
    const bool tracked = g.tracking() && (a->requires_grad() || b->requires_grad());
    auto out = detail::make_output<Scalar>("matmul", {m, n}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        auto* pb = b.get();
        g.record({a, b}, out, [o, pa, pb, m, k, n] {
            const auto grad = detail::as_matrix<Scalar>(o->grad(), m, n);
            if (pa->requires_grad()) {
                detail::as_matrix<Scalar>(pa->grad_buffer(), m, k).noalias() +=
                    grad * detail::as_matrix<Scalar>(pb->data(), k, n).transpose();
            }
            if (pb->requires_grad()) {
                detail::as_matrix<Scalar>(pb->grad_buffer(), k, n).noalias() +=
                    detail::as_matrix<Scalar>(pa->data(), m, k).transpose() * grad;
            }
        });
    }
    return out;
}

/// Same-padded stride-1 convolution of an [H x W x Cin] input with a
/// [k x k x Cin x Cout] kernel (odd k, zero padding (k-1)/2), via im2col.
template <typename Scalar>
TensorPtr<Scalar> conv2d(Graph<Scalar>& g, const TensorPtr<Scalar>& input, const TensorPtr<Scalar>& kernel) {
    if (input->rank() != 3 || kernel->rank() != 4) {
        throw ShapeError("conv2d: expected [H,W,Cin] input and [k,k,Cin,Cout] kernel, got " +
                         shape_string(input->shape()) + " and " + shape_string(kernel->shape()));
    }
    const std::size_t h = input->dim(0), w = input->dim(1), cin = input->dim(2);
    const std::size_t ks = kernel->dim(0), cout = kernel->dim(3);
    if (kernel->dim(1) != ks) {
        throw ShapeError("conv2d: kernel must be square");
    }
    if (ks % 2 == 0) {
        throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(ks));
    }
    if (kernel->dim(2) != cin) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel->dim(2)) + " input channels, input has " +
                         std::to_string(cin));
    }
    const auto pad = static_cast<std::ptrdiff_t>(ks / 2);
    const std::size_t patch = ks * ks * cin;
    const std::size_t pixels = h * w;

    auto cols = std::make_shared<detail::RowMatrix<Scalar>>(detail::RowMatrix<Scalar>::Zero(
        static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(patch)));
    const Scalar* src = input->data().data();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            Scalar* row = cols->data() + (y * w + x) * patch;
            for (std::size_t ky = 0; ky < ks; ++ky) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                    continue;
                }
                for (std::size_t kx = 0; kx < ks; ++kx) {
                    const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    std::copy_n(src + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * cin, cin,
                                row + (ky * ks + kx) * cin);
                }
            }
        }
    }

    typename Tensor<Scalar>::Array data(static_cast<Eigen::Index>(pixels * cout));
    detail::as_matrix<Scalar>(data, pixels, cout).noalias() =
        (*cols) * detail::as_matrix<Scalar>(kernel->data(), patch, cout);
    const bool tracked = g.tracking() && (input->requires_grad() || kernel->requires_grad());
    auto out = detail::make_output<Scalar>("conv2d", {h, w, cout}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pin = input.get();
        auto* pk = kernel.get();
        g.record({input, kernel}, out, [o, pin, pk, cols, h, w, cin, ks, cout, pad, patch, pixels] {
            const auto grad = detail::as_matrix<Scalar>(o->grad(), pixels, cout);
            if (pk->requires_grad()) {
                detail::as_matrix<Scalar>(pk->grad_buffer(), patch, cout).noalias() += cols->transpose() * grad;
            }
            if (!pin->requires_grad()) {
                return;
            }
            const detail::RowMatrix<Scalar> dcols = grad * detail::as_matrix<Scalar>(pk->data(), patch, cout).transpose();
            Scalar* dst = pin->grad_buffer().data();
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const Scalar* row = dcols.data() + (y * w + x) * patch;
                    for (std::size_t ky = 0; ky < ks; ++ky) {
                        const auto sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                            continue;
                        }
                        for (std::size_t kx = 0; kx < ks; ++kx) {
                            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - pad;
                            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
                                continue;
                            }
                            Scalar* cell = dst + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * cin;
                            const Scalar* part = row + (ky * ks + kx) * cin;
                            for (std::size_t c = 0; c < cin; ++c) {
                                cell[c] += part[c];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

/// Adds a per-channel bias (rank-1, length = last dim of x) to every position.
template <typename Scalar>
TensorPtr<Scalar> bias_add(Graph<Scalar>& g, const TensorPtr<Scalar>& x, const TensorPtr<Scalar>& bias) {
    if (bias->rank() != 1 || bias->dim(0) != x->shape().back()) {
        throw ShapeError("bias_add: bias " + shape_string(bias->shape()) + " does not match channels of " +
                         shape_string(x->shape()));
    }
    const std::size_t channels = bias->dim(0);
    const std::size_t rows = x->size() / channels;
    typename Tensor<Scalar>::Array data = x->data();
    detail::as_matrix<Scalar>(data, rows, channels).rowwise() +=
        detail::as_matrix<Scalar>(bias->data(), 1, channels).row(0);
    const bool tracked = g.tracking() && (x->requires_grad() || bias->requires_grad());
    auto out = detail::make_output<Scalar>("bias_add", x->shape(), std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* px = x.get();
        auto* pb = bias.get();
        g.record({x, bias}, out, [o, px, pb, rows, channels] {
            detail::accumulate(*px, o->grad());
            if (pb->requires_grad()) {
                detail::as_matrix<Scalar>(pb->grad_buffer(), 1, channels) +=
                    detail::as_matrix<Scalar>(o->grad(), rows, channels).colwise().sum();
            }
        });
    }
    return out;
}

template <typename Scalar>
TensorPtr<Scalar> reshape(Graph<Scalar>& g, const TensorPtr<Scalar>& a, const Shape& shape) {
    if (shape_size(shape) != a->size()) {
        throw ShapeError("reshape: cannot view " + shape_string(a->shape()) + " as " + shape_string(shape));
    }
    const bool tracked = g.tracking() && (a->requires_grad());
    auto out = detail::make_output<Scalar>("reshape", shape, a->data(), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa] { pa->grad_buffer() += o->grad(); });
    }
    return out;
}

/// Row gather: views src as rows of length src.shape().back() and copies the
/// rows named by `indices` in order. The adjoint scatter-adds into src.
template <typename Scalar>
TensorPtr<Scalar> gather_rows(Graph<Scalar>& g, const TensorPtr<Scalar>& src, std::vector<std::size_t> indices,
                              const Shape& out_shape) {
    const std::size_t width = src->shape().back();
    const std::size_t rows = src->size() / width;
    if (out_shape.empty() || out_shape.back() != width || shape_size(out_shape) != indices.size() * width) {
        throw ShapeError("gather_rows: output shape " + shape_string(out_shape) + " incompatible with " +
                         std::to_string(indices.size()) + " rows of width " + std::to_string(width));
    }
    typename Tensor<Scalar>::Array data(static_cast<Eigen::Index>(indices.size() * width));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= rows) {
            throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range " +
                             std::to_string(rows));
        }
        std::copy_n(src->data().data() + indices[r] * width, width, data.data() + r * width);
    }
    const bool tracked = g.tracking() && (src->requires_grad());
    auto out = detail::make_output<Scalar>("gather_rows", out_shape, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* ps = src.get();
        g.record({src}, out, [o, ps, idx = std::move(indices), width] {
            auto& dst = ps->grad_buffer();
            const auto& grad = o->grad();
            for (std::size_t r = 0; r < idx.size(); ++r) {
                dst.segment(static_cast<Eigen::Index>(idx[r] * width), static_cast<Eigen::Index>(width)) +=
                    grad.segment(static_cast<Eigen::Index>(r * width), static_cast<Eigen::Index>(width));
            }
        });
    }
    return out;
}

/// Stacks n copies of a along a new leading dimension.
template <typename Scalar>
TensorPtr<Scalar> tile(Graph<Scalar>& g, const TensorPtr<Scalar>& a, std::size_t n) {
    if (n == 0) {
        throw ShapeError("tile: count must be >= 1");
    }
    Shape shape{n};
    shape.insert(shape.end(), a->shape().begin(), a->shape().end());
    const std::size_t len = a->size();
    typename Tensor<Scalar>::Array data = a->data().replicate(static_cast<Eigen::Index>(n), 1);
    const bool tracked = g.tracking() && (a->requires_grad());
    auto out = detail::make_output<Scalar>("tile", std::move(shape), std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa, n, len] {
            detail::as_matrix<Scalar>(pa->grad_buffer(), 1, len) +=
                detail::as_matrix<Scalar>(o->grad(), n, len).colwise().sum();
        });
    }
    return out;
}

/// [N x p] ++ [N x q] -> [N x (p+q)].
template <typename Scalar>
TensorPtr<Scalar> concat_columns(Graph<Scalar>& g, const TensorPtr<Scalar>& a, const TensorPtr<Scalar>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(0)) {
        throw ShapeError("concat_columns: incompatible " + shape_string(a->shape()) + " and " +
                         shape_string(b->shape()));
    }
    const std::size_t n = a->dim(0), p = a->dim(1), q = b->dim(1);
    typename Tensor<Scalar>::Array data(static_cast<Eigen::Index>(n * (p + q)));
    auto m = detail::as_matrix<Scalar>(data, n, p + q);
    m.leftCols(static_cast<Eigen::Index>(p)) = detail::as_matrix<Scalar>(a->data(), n, p);
    m.rightCols(static_cast<Eigen::Index>(q)) = detail::as_matrix<Scalar>(b->data(), n, q);
    const bool tracked = g.tracking() && (a->requires_grad() || b->requires_grad());
    auto out = detail::make_output<Scalar>("concat_columns", {n, p + q}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        auto* pb = b.get();
        g.record({a, b}, out, [o, pa, pb, n, p, q] {
            const auto grad = detail::as_matrix<Scalar>(o->grad(), n, p + q);
            if (pa->requires_grad()) {
                detail::as_matrix<Scalar>(pa->grad_buffer(), n, p) += grad.leftCols(static_cast<Eigen::Index>(p));
            }
            if (pb->requires_grad()) {
                detail::as_matrix<Scalar>(pb->grad_buffer(), n, q) += grad.rightCols(static_cast<Eigen::Index>(q));
            }
        });
    }
    return out;
}

template <typename Scalar>
TensorPtr<Scalar> sum(Graph<Scalar>& g, const TensorPtr<Scalar>& a) {
    const bool tracked = g.tracking() && (a->requires_grad());
    typename Tensor<Scalar>::Array data(1);
    data[0] = a->data().sum();
    auto out = detail::make_output<Scalar>("sum", {1}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa] { pa->grad_buffer() += o->grad()[0]; });
    }
    return out;
}

template <typename Scalar>
TensorPtr<Scalar> mean(Graph<Scalar>& g, const TensorPtr<Scalar>& a) {
    const bool tracked = g.tracking() && (a->requires_grad());
    const auto n = static_cast<Scalar>(a->size());
    typename Tensor<Scalar>::Array data(1);
    data[0] = a->data().sum() / n;
    auto out = detail::make_output<Scalar>("mean", {1}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pa = a.get();
        g.record({a}, out, [o, pa, n] { pa->grad_buffer() += o->grad()[0] / n; });
    }
    return out;
}

enum class ReduceOp { Sum, Mean };

template <typename Scalar>
TensorPtr<Scalar> reduce(Graph<Scalar>& g, ReduceOp op, const TensorPtr<Scalar>& a) {
    return op == ReduceOp::Sum ? sum(g, a) : mean(g, a);
}

/// Mean absolute deviation. The subgradient at a zero residual is 0.
template <typename Scalar>
TensorPtr<Scalar> l1_loss(Graph<Scalar>& g, const TensorPtr<Scalar>& pred, const TensorPtr<Scalar>& target) {
    detail::require_same_shape("l1_loss", pred->shape(), target->shape());
    if (target->requires_grad()) {
        throw GraphError("l1_loss: target must not track gradients");
    }
    const auto n = static_cast<Scalar>(pred->size());
    typename Tensor<Scalar>::Array data(1);
    data[0] = (pred->data() - target->data()).abs().sum() / n;
    const bool tracked = g.tracking() && (pred->requires_grad());
    auto out = detail::make_output<Scalar>("l1_loss", {1}, std::move(data), tracked);
    if (tracked) {
        auto* o = out.get();
        auto* pp = pred.get();
        auto* pt = target.get();
        g.record({pred, target}, out, [o, pp, pt, n] {
            pp->grad_buffer() += (pp->data() - pt->data()).sign() * (o->grad()[0] / n);
        });
    }
    return out;
}

} // namespace owslr
