#pragma once

#include <cmath>
#include <initializer_list>
#include <utility>
#include <vector>

#include "eadnet/common.hpp"

namespace eadnet {

/// Dense row-major N-dimensional array. Layout is N,C,H,W for image data.
/// T is float for training, double for gradient verification.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}

    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        require<ShapeError>(static_cast<i64>(data.size()) == shape_numel(shape),
                            "tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    i64 numel() const { return static_cast<i64>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    i64 dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T& at2(i64 y, i64 x) { return data[static_cast<size_t>(y * shape[1] + x)]; }
    T at2(i64 y, i64 x) const { return data[static_cast<size_t>(y * shape[1] + x)]; }

    T& at3(i64 c, i64 y, i64 x) {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    T at3(i64 c, i64 y, i64 x) const {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }

    T& at4(i64 n, i64 c, i64 y, i64 x) {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    T at4(i64 n, i64 c, i64 y, i64 x) const {
        return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T min_value() const {
        T m = data.empty() ? T(0) : data[0];
        for (T v : data) m = std::min(m, v);
        return m;
    }

    T max_value() const {
        T m = data.empty() ? T(0) : data[0];
        for (T v : data) m = std::max(m, v);
        return m;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace eadnet
