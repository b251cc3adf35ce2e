#pragma once

// Finite-difference gradient checking against the reverse-mode engine.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "clora/tensor.hpp"

namespace clora {

// A function from a list of tensors to a scalar tensor, evaluated through
// the supplied graph.
using TensorFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct GradcheckResult {
    scalar max_rel_err = 0;
    std::string worst_coord;  // "input i, flat j"
};

// Compares the analytic gradient of f at `inputs` against central finite
// differences with the given step. Returns the max over all coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// Non-finite values abort with a diagnostic naming the coordinate.
inline GradcheckResult gradcheck_detail(const TensorFn& f, std::vector<Tensor> inputs, scalar step) {
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
        for (scalar v : in.data())
            if (!std::isfinite(v)) throw std::runtime_error("gradcheck: non-finite input value");
    }

    Graph g;
    Tensor y = f(g, inputs);
    if (!y.is_scalar())
        detail::shape_fail("gradcheck", "function output must be scalar, got " + shape_str(y.shape()));
    g.backward(y);

    std::vector<std::vector<scalar>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs)
        analytic.push_back(in.has_grad() ? in.grad() : std::vector<scalar>(static_cast<size_t>(in.numel()), 0));

    GradcheckResult res;
    Graph quiet;
    quiet.recording = false;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto& vals = inputs[i].data();
        for (size_t j = 0; j < vals.size(); ++j) {
            const scalar keep = vals[j];
            vals[j] = keep + step;
            const scalar fp = f(quiet, inputs).item();
            vals[j] = keep - step;
            const scalar fm = f(quiet, inputs).item();
            vals[j] = keep;
            const scalar numeric = (fp - fm) / (2 * step);
            const scalar a = analytic[i][j];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw std::runtime_error("gradcheck: non-finite gradient at input " + std::to_string(i) +
                                         ", flat " + std::to_string(j));
            const scalar denom = std::max(scalar(1), std::max(std::fabs(a), std::fabs(numeric)));
            const scalar rel = std::fabs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_coord = "input " + std::to_string(i) + ", flat " + std::to_string(j);
            }
        }
    }
    return res;
}

inline scalar gradcheck(const TensorFn& f, const std::vector<Tensor>& inputs, scalar step = scalar(1e-5)) {
    return gradcheck_detail(f, inputs, step).max_rel_err;
}

}  // namespace clora
