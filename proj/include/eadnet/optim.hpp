#pragma once

#include <vector>

#include "eadnet/params.hpp"

// Adam with bias correction, plus the step-decay learning-rate schedule.
// Optimizer state vectors align with the trainable items of a ParamStore in
// store order; non-trainable buffers are skipped.

namespace eadnet::optim {

struct OptimConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr0 = 5e-4;
    int decay_every = 20;       // epochs
    double decay_factor = 0.1;
    i64 batch = 4;
    i64 crop = 256;
    std::uint64_t seed = 0;
};

template <class T>
struct AdamState {
    std::vector<Tensor<T>> m, v;  // one per store item (empty for buffers)
    i64 t = 0;
};

template <class T>
AdamState<T> make_adam_state(const ParamStore<T>& store) {
    AdamState<T> st;
    st.m.reserve(store.items.size());
    st.v.reserve(store.items.size());
    for (const auto& it : store.items) {
        st.m.emplace_back(it.trainable ? Tensor<T>(it.t.shape) : Tensor<T>());
        st.v.emplace_back(it.trainable ? Tensor<T>(it.t.shape) : Tensor<T>());
    }
    return st;
}

/// grads[i] pairs with store.items[i]; empty tensors are treated as zero
/// gradients (parameters the loss never reached). t increments once per call.
template <class T>
void adam_step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double lr, const OptimConfig& cfg) {
    require<ShapeError>(grads.size() == store.items.size() &&
                            state.m.size() == store.items.size(),
                        "adam_step: state/gradient list does not match parameter store");
    state.t += 1;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
    for (size_t k = 0; k < store.items.size(); ++k) {
        auto& it = store.items[k];
        if (!it.trainable) continue;
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (!grads[k].data.empty())
            require<ShapeError>(grads[k].same_shape(it.t),
                                "adam_step: gradient shape " + shape_str(grads[k].shape) +
                                    " does not match parameter " + it.name + " " +
                                    shape_str(it.t.shape));
        for (i64 i = 0; i < it.t.numel(); ++i) {
            const T g = grads[k].data.empty() ? T(0) : grads[k].data[i];
            m.data[i] = b1 * m.data[i] + (T(1) - b1) * g;
            v.data[i] = b2 * v.data[i] + (T(1) - b2) * g * g;
            const T mhat = m.data[i] / bc1;
            const T vhat = v.data[i] / bc2;
            it.t.data[i] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + static_cast<T>(cfg.eps));
        }
    }
}

/// lr0 * decay_factor^floor(epoch/decay_every), computed by repeated
/// multiplication so the decade steps hit their decimal literals exactly
/// (5e-4 -> 5e-5 -> 5e-6); a pow()-based form drifts by one ulp at k=2.
inline double lr_schedule(int epoch, const OptimConfig& cfg) {
    require<Error>(epoch >= 0, "lr_schedule: negative epoch");
    double lr = cfg.lr0;
    const int k = cfg.decay_every > 0 ? epoch / cfg.decay_every : 0;
    for (int i = 0; i < k; ++i) lr *= cfg.decay_factor;
    return lr;
}

}  // namespace eadnet::optim
