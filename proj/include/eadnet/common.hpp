#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eadnet {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

/// Base error type; CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension violations. Messages name the offending dimension.
struct ShapeError : Error {
    using Error::Error;
};

/// File, format, and manifest problems (exit code 2).
struct DataError : Error {
    using Error::Error;
};

/// Numerical failures such as NaN losses or degenerate norms (exit code 3).
struct NumericError : Error {
    using Error::Error;
};

template <class E = Error>
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw E(msg);
}

inline i64 shape_numel(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) {
        require<ShapeError>(d >= 0, "negative dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

}  // namespace eadnet
