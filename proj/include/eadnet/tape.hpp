#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "eadnet/common.hpp"
#include "eadnet/tensor.hpp"

// Reverse-mode autodiff tape. Nodes are recorded in execution order; each op
// pushes its output value together with a backward closure that reads the
// output gradient and accumulates into the input gradients. backward() seeds
// the scalar loss with 1 and replays the closures in reverse push order,
// which is a valid topological order by construction.

namespace eadnet::ad {

template <class T>
class Tape {
  public:
    using BackFn = std::function<void(Tape<T>&, int)>;

    struct Node {
        Tensor<T> value;
        std::vector<int> inputs;
        BackFn back;          // empty for leaves
        bool needs_grad = true;
    };

    int leaf(Tensor<T> v, bool needs_grad = true) {
        nodes_.push_back(Node{std::move(v), {}, nullptr, needs_grad});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    int push(Tensor<T> v, std::vector<int> inputs, BackFn back) {
        bool ng = false;
        for (int i : inputs) ng = ng || nodes_[static_cast<size_t>(i)].needs_grad;
        nodes_.push_back(Node{std::move(v), std::move(inputs), std::move(back), ng});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor<T>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor<T>& value_mut(int id) { return nodes_[static_cast<size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    bool has_grad(int id) const { return !grads_[static_cast<size_t>(id)].data.empty(); }

    /// Read a gradient that is known to exist (inside backward closures).
    const Tensor<T>& grad(int id) const { return grads_[static_cast<size_t>(id)]; }

    /// Gradient buffer for a node, zero-initialized on first touch.
    Tensor<T>& grad_mut(int id) {
        auto& g = grads_[static_cast<size_t>(id)];
        if (g.data.empty()) g = Tensor<T>(nodes_[static_cast<size_t>(id)].value.shape);
        return g;
    }

    /// Gradient of a node after backward(); zeros if the loss never reached it.
    Tensor<T> grad_or_zero(int id) const {
        const auto& g = grads_[static_cast<size_t>(id)];
        if (g.data.empty()) return Tensor<T>(nodes_[static_cast<size_t>(id)].value.shape);
        return g;
    }

    void backward(int loss_id) {
        require<ShapeError>(value(loss_id).numel() == 1,
                            "backward: loss must be a scalar, got " + shape_str(value(loss_id).shape));
        grad_mut(loss_id).data[0] = T(1);
        for (int id = loss_id; id >= 0; --id) {
            auto& n = nodes_[static_cast<size_t>(id)];
            if (!n.back || !n.needs_grad || !has_grad(id)) continue;
            n.back(*this, id);
        }
    }

    void clear_grads() {
        for (auto& g : grads_) g = Tensor<T>();
    }

    size_t size() const { return nodes_.size(); }

    /// Drop all nodes recorded after the given watermark (used between steps).
    void truncate(size_t keep) {
        nodes_.resize(keep);
        grads_.resize(keep);
    }

  private:
    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

}  // namespace eadnet::ad
