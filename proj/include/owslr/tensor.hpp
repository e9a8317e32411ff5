#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "owslr/error.hpp"

namespace owslr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major N-d array with an optional gradient buffer.
///
/// Tensors are shared through TensorPtr so that the graph can keep inputs
/// alive until backward. Parameters persist across graphs; intermediates
/// live as long as the graph that produced them.
template <typename Scalar>
class Tensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Tensor(Shape shape, Array data, bool requires_grad = false)
        : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
        if (shape_.empty()) {
            throw ShapeError("tensor shape must have at least one dimension");
        }
        for (auto d : shape_) {
            if (d == 0) {
                throw ShapeError("tensor dimensions must be >= 1, got " + shape_string(shape_));
            }
        }
        if (static_cast<std::size_t>(data_.size()) != shape_size(shape_)) {
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
        if (!data_.allFinite()) {
            throw NumericError("tensor data contains non-finite values");
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

    const Array& data() const { return data_; }
    /// Mutable access, for optimizers and loaders. Callers keep values finite.
    Array& data() { return data_; }

    Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

    Scalar item() const {
        if (size() != 1) {
            throw ShapeError("item() on tensor of shape " + shape_string(shape_));
        }
        return data_[0];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on) { requires_grad_ = on; }

    bool has_grad() const { return grad_.has_value(); }
    const Array& grad() const {
        if (!grad_) {
            throw GraphError("tensor has no gradient");
        }
        return *grad_;
    }
    /// Gradient buffer, zero-initialized on first access.
    Array& grad_buffer() {
        if (!grad_) {
            grad_ = Array::Zero(data_.size());
        }
        return *grad_;
    }
    void clear_grad() { grad_.reset(); }

private:
    Shape shape_;
    Array data_;
    bool requires_grad_;
    std::optional<Array> grad_;
};

template <typename Scalar>
using TensorPtr = std::shared_ptr<Tensor<Scalar>>;

struct Zeros {};
struct Constant {
    double value;
};
struct Uniform {
    std::uint64_t seed;
    double lo;
    double hi;
};
using InitMode = std::variant<Zeros, Constant, Uniform>;

/// Draws reproducible uniform reals in [lo, hi) from a 64-bit Mersenne twister.
/// The mapping uses the top 53 bits so the sequence does not depend on the
/// standard library's distribution implementation.
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    return lo + (hi - lo) * u;
}

template <typename Scalar>
TensorPtr<Scalar> init_tensor(const Shape& shape, const InitMode& mode, bool requires_grad = false) {
    if (shape.empty()) {
        throw ShapeError("init_tensor: empty shape");
    }
    using Array = typename Tensor<Scalar>::Array;
    const auto n = static_cast<Eigen::Index>(shape_size(shape));
    Array data(n);
    if (std::holds_alternative<Zeros>(mode)) {
        data.setZero();
    } else if (const auto* c = std::get_if<Constant>(&mode)) {
        if (!std::isfinite(c->value)) {
            throw NumericError("init_tensor: non-finite constant");
        }
        data.setConstant(static_cast<Scalar>(c->value));
    } else {
        const auto& u = std::get<Uniform>(mode);
        if (!std::isfinite(u.lo) || !std::isfinite(u.hi) || u.hi < u.lo) {
            throw NumericError("init_tensor: invalid uniform bounds");
        }
        std::mt19937_64 rng(u.seed);
        for (Eigen::Index i = 0; i < n; ++i) {
            data[i] = static_cast<Scalar>(uniform_real(rng, u.lo, u.hi));
        }
    }
    return std::make_shared<Tensor<Scalar>>(shape, std::move(data), requires_grad);
}

template <typename Scalar>
TensorPtr<Scalar> make_tensor(const Shape& shape, std::vector<Scalar> values, bool requires_grad = false) {
    typename Tensor<Scalar>::Array data =
        Eigen::Map<const typename Tensor<Scalar>::Array>(values.data(), static_cast<Eigen::Index>(values.size()));
    return std::make_shared<Tensor<Scalar>>(shape, std::move(data), requires_grad);
}

/// Deep copy of values into another scalar type; gradients are not copied.
template <typename To, typename From>
TensorPtr<To> cast_tensor(const Tensor<From>& t, bool requires_grad) {
    return std::make_shared<Tensor<To>>(t.shape(), t.data().template cast<To>(), requires_grad);
}

} // namespace owslr
