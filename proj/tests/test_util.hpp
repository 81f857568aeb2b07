#pragma once

// Shared test helpers: random tensor builders and a central-difference
// gradient checker. The checker rebuilds the graph per perturbed element, so
// it stays independent of the backward rules it is auditing.

#include <cmath>
#include <functional>
#include <vector>

#include "t2net/ops.hpp"
#include "t2net/tensor.hpp"

namespace t2test {

template <typename T>
t2net::TensorPtrT<T> rand_tensor(std::vector<int> shape, t2net::Rng& rng, double lo = -1.0,
                                 double hi = 1.0, bool requires_grad = false) {
    auto t = t2net::make_tensor<T>(std::move(shape), requires_grad);
    for (auto& v : t->values) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

struct GradCheckResult {
    double max_rel_err = 0.0;   // over elements with |analytic| >= 1e-6
    double max_abs_err = 0.0;   // over elements with |analytic| <  1e-6
    int checked = 0;
    bool ok(double rel_tol = 1e-4, double abs_tol = 1e-6) const {
        return checked > 0 && max_rel_err < rel_tol && max_abs_err < abs_tol;
    }
};

/// build(tape) must construct the scalar loss from the current values of
/// `inputs` (and anything else it captures). Gradients are checked in double
/// with central differences of step h.
inline GradCheckResult grad_check(
    const std::function<t2net::TensorPtrT<double>(t2net::TapeT<double>*)>& build,
    const std::vector<t2net::TensorPtrT<double>>& inputs, double h = 1e-4) {
    using namespace t2net;
    for (const auto& in : inputs) {
        in->requires_grad = true;
        in->grad.clear();
    }
    TapeT<double> tape;
    auto loss = build(&tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs) {
        in->ensure_grad();
        analytic.push_back(in->grad);
    }

    auto eval = [&]() {
        auto l = build(nullptr);
        return l->values[0];
    };

    GradCheckResult res;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& vals = inputs[t]->values;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = eval();
            vals[i] = keep - h;
            const double dn = eval();
            vals[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double an = analytic[t][i];
            res.checked++;
            if (std::fabs(an) < 1e-6) {
                res.max_abs_err = std::max(res.max_abs_err, std::fabs(an - fd));
            } else {
                const double rel = std::fabs(an - fd) / std::max(std::fabs(an), std::fabs(fd));
                res.max_rel_err = std::max(res.max_rel_err, rel);
            }
        }
    }
    return res;
}

/// Attaches a fixed random projection so a tensor-valued op yields a scalar
/// loss with nondegenerate gradients everywhere.
template <typename T>
t2net::TensorPtrT<T> project_to_scalar(t2net::TapeT<T>* tape, const t2net::TensorPtrT<T>& x,
                                       const t2net::TensorPtrT<T>& projection) {
    return t2net::sum(tape, t2net::mul(tape, x, projection));
}

}  // namespace t2test
