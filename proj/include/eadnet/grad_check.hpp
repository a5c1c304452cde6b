#pragma once

#include <functional>
#include <vector>

#include "eadnet/ops.hpp"

// Central-difference gradient verification. The builder runs the function
// under test on a fresh tape for every probe, so any op that caches state in
// closures (pooling argmax etc.) is re-evaluated honestly at the perturbed
// point.

namespace eadnet::ad {

struct FdReport {
    double max_abs_diff = 0.0;  // max |analytic - numeric|
    double max_rel_diff = 0.0;  // same, normalized by max(|analytic|, |numeric|, 1)
    i64 coords_checked = 0;
};

/// build(tape, leaf_ids) must record the function and return the scalar loss
/// node. Every tensor in `inputs` becomes a trainable leaf, in order.
template <class T, class Build>
FdReport fd_check(const std::vector<Tensor<T>>& inputs, Build&& build, double h = 1e-5) {
    // analytic pass
    std::vector<Tensor<T>> analytic;
    {
        Tape<T> t;
        std::vector<int> ids;
        ids.reserve(inputs.size());
        for (const auto& in : inputs) ids.push_back(t.leaf(in));
        const int loss = build(t, ids);
        t.backward(loss);
        for (int id : ids) analytic.push_back(t.grad_or_zero(id));
    }

    auto eval = [&](const std::vector<Tensor<T>>& pt) {
        Tape<T> t;
        std::vector<int> ids;
        ids.reserve(pt.size());
        for (const auto& in : pt) ids.push_back(t.leaf(in));
        return static_cast<double>(t.value(build(t, ids)).data[0]);
    };

    FdReport rep;
    std::vector<Tensor<T>> probe = inputs;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (i64 i = 0; i < inputs[k].numel(); ++i) {
            const T orig = probe[k].data[i];
            probe[k].data[i] = orig + static_cast<T>(h);
            const double fp = eval(probe);
            probe[k].data[i] = orig - static_cast<T>(h);
            const double fm = eval(probe);
            probe[k].data[i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = static_cast<double>(analytic[k].data[i]);
            const double ad = std::abs(ana - num);
            rep.max_abs_diff = std::max(rep.max_abs_diff, ad);
            rep.max_rel_diff =
                std::max(rep.max_rel_diff, ad / std::max({std::abs(ana), std::abs(num), 1.0}));
            ++rep.coords_checked;
        }
    }
    return rep;
}

}  // namespace eadnet::ad
