#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "t2net/common.hpp"

namespace t2net {

// ----------------------------------------------------------------------------
// Dense tensor, row-major, 4-D layout convention [batch, channels, height,
// width]. Templated on the scalar type: float is the working precision,
// double exists for finite-difference gradient checks.
// ----------------------------------------------------------------------------

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::vector<T> grad;  // empty until ensure_grad(); same length as values otherwise

    TensorT() = default;

    explicit TensorT(std::vector<int> shape_, bool requires_grad_ = false)
        : shape(std::move(shape_)),
          values(shape_numel(shape), T(0)),
          requires_grad(requires_grad_) {}

    TensorT(std::vector<int> shape_, std::vector<T> values_, bool requires_grad_ = false)
        : shape(std::move(shape_)), values(std::move(values_)), requires_grad(requires_grad_) {
        if (values.size() != shape_numel(shape))
            throw DimensionError("tensor: " + std::to_string(values.size()) +
                                 " values do not fill shape " + shape_str(shape));
    }

    std::size_t numel() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
    bool is_scalar() const { return numel() == 1; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    // [B,C,H,W] accessor; no bounds checks, test/debug convenience.
    T& at4(int b, int c, int y, int x) {
        return values[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    const T& at4(int b, int c, int y, int x) const {
        return values[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
};

template <typename T>
using TensorPtrT = std::shared_ptr<TensorT<T>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

template <typename T>
TensorPtrT<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
    return std::make_shared<TensorT<T>>(std::move(shape), requires_grad);
}

template <typename T>
TensorPtrT<T> make_tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    return std::make_shared<TensorT<T>>(std::move(shape), std::move(values), requires_grad);
}

// Integer tensor: attention transfer indices. Never carries gradient.
struct IntTensor {
    std::vector<int> shape;
    std::vector<std::int32_t> values;

    IntTensor() = default;
    explicit IntTensor(std::vector<int> shape_)
        : shape(std::move(shape_)), values(shape_numel(shape), 0) {}
    IntTensor(std::vector<int> shape_, std::vector<std::int32_t> values_)
        : shape(std::move(shape_)), values(std::move(values_)) {
        if (values.size() != shape_numel(shape))
            throw DimensionError("int tensor: values do not fill shape " + shape_str(shape));
    }
    std::size_t numel() const { return values.size(); }
};

using IntTensorPtr = std::shared_ptr<IntTensor>;

// ----------------------------------------------------------------------------
// Tape: the reverse-mode record. Ops push backward rules during the forward
// pass; backward() replays them last-to-first, accumulating into .grad of
// every requires_grad tensor reachable from the loss.
// ----------------------------------------------------------------------------

template <typename T>
class TapeT {
public:
    void record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }

    std::size_t size() const { return rules_.size(); }
    void clear() { rules_.clear(); }

    /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
    void backward(const TensorPtrT<T>& loss) {
        if (!loss || !loss->is_scalar())
            throw ContractError("backward: loss must be a scalar tensor, got shape " +
                                (loss ? shape_str(loss->shape) : std::string("null")));
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> rules_;
};

using Tape = TapeT<float>;

template <typename T>
void backward(const TensorPtrT<T>& loss, TapeT<T>& tape) {
    tape.backward(loss);
}

// ----------------------------------------------------------------------------
// Adam
// ----------------------------------------------------------------------------

template <typename T>
struct AdamStateT {
    std::vector<T> m;  // first moment
    std::vector<T> v;  // second moment
    std::int64_t step = 0;
};

using AdamState = AdamStateT<float>;

/// Bias-corrected Adam update, applied in place. Moment arrays are
/// zero-initialized on first use; the step counter increments by one.
template <typename T>
void adam_step(TensorT<T>& param, AdamStateT<T>& state, double lr, double beta1, double beta2,
               double eps);

}  // namespace t2net
