#pragma once

#include <string>

#include "eadnet/tensor.hpp"

// Binary PPM (P6) / PGM (P5) codecs, 8-bit maxval 255 only. Pixels map to
// float as v/255; writing inverts with round-half-up, so 8-bit data
// round-trips exactly. Layout is [C,H,W] with C=3 (PPM) or C=1 (PGM).

namespace eadnet::img {

Tensor<float> read_image(const std::string& path);

/// Writes P6 for C=3 and P5 for C=1; values clamped to [0,1] first.
void write_image(const std::string& path, const Tensor<float>& t);

/// Luma conversion with broadcast weights 0.299 R + 0.587 G + 0.114 B.
/// C=1 input passes through as a copy reshaped to [H,W].
Tensor<float> to_gray(const Tensor<float>& t);

}  // namespace eadnet::img
