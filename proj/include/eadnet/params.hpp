#pragma once

#include <string>
#include <vector>

#include "eadnet/tape.hpp"
#include "eadnet/tensor.hpp"

// Named parameter collections. Models own a ParamStore; training binds every
// item onto a tape as a leaf each step, runs forward/backward, then applies
// optimizer updates to the stored tensors. Non-trainable items (running
// buffers such as spectral-norm u vectors) are saved in checkpoints but
// excluded from parameter counts and optimizer state.

namespace eadnet {

template <class T>
struct ParamStore {
    struct Item {
        std::string name;
        Tensor<T> t;
        bool trainable = true;
    };

    std::vector<Item> items;

    Tensor<T>& add(std::string name, Tensor<T> t, bool trainable = true) {
        for (const auto& it : items)
            require<Error>(it.name != name, "duplicate parameter name " + name);
        items.push_back(Item{std::move(name), std::move(t), trainable});
        return items.back().t;
    }

    Item* find(const std::string& name) {
        for (auto& it : items)
            if (it.name == name) return &it;
        return nullptr;
    }
    const Item* find(const std::string& name) const {
        for (const auto& it : items)
            if (it.name == name) return &it;
        return nullptr;
    }

    Tensor<T>& tensor(const std::string& name) {
        auto* it = find(name);
        require<Error>(it != nullptr, "unknown parameter " + name);
        return it->t;
    }

    i64 param_count() const {
        i64 n = 0;
        for (const auto& it : items)
            if (it.trainable) n += it.t.numel();
        return n;
    }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& it : items)
            out.items.push_back({it.name, it.t.template cast<U>(), it.trainable});
        return out;
    }
};

/// Parameter nodes bound onto a tape for one forward/backward pass. Bind
/// order follows store order; index i corresponds to items[i].
template <class T>
struct BoundParams {
    std::vector<int> node_of;           // per store item
    const ParamStore<T>* store = nullptr;

    int at(const std::string& name) const {
        for (size_t i = 0; i < store->items.size(); ++i)
            if (store->items[i].name == name) return node_of[i];
        throw Error("unbound parameter " + name);
    }
};

/// frozen=true binds every item without gradient tracking (phase-2 EdgeNet).
/// Non-trainable buffers never track gradients.
template <class T>
BoundParams<T> bind_params(ad::Tape<T>& tape, const ParamStore<T>& store, bool frozen = false) {
    BoundParams<T> b;
    b.store = &store;
    b.node_of.reserve(store.items.size());
    for (const auto& it : store.items)
        b.node_of.push_back(tape.leaf(it.t, !frozen && it.trainable));
    return b;
}

}  // namespace eadnet
