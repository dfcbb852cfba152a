#pragma once

#include <optional>
#include <type_traits>

#include "erfseg/conv_spec.hpp"
#include "erfseg/tape.hpp"

namespace erfseg {

// Differentiable ops. Every op records itself on the tape of its first
// argument; all arguments must live on the same tape. Elementwise binary ops
// require identical shapes (no broadcasting).

/// Dilated/grouped cross-correlation. input [B,Cin,H,W], weight
/// [Cout,Cin/groups,kh,kw], optional bias [Cout].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<std::type_identity_t<Var<T>>> bias,
              const ConvSpec& spec);

/// 2x2 window, stride 2. Backward routes to the first max in row-major order.
template <typename T>
Var<T> maxpool2d(Var<T> input);

/// Bilinear upsampling by an integer factor, half-pixel centres:
/// src = (dst + 0.5) / scale - 0.5, clamped to the valid range.
template <typename T>
Var<T> bilinear_upsample(Var<T> input, std::size_t scale);

/// Per-(sample, channel) standardisation with affine gamma/beta of shape [C].
template <typename T>
Var<T> instance_norm(Var<T> input, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

/// Logistic function; the result always lies strictly inside (0, 1).
template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// Concatenate two rank-4 tensors along the channel axis.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

/// Sum of all elements as a rank-0 scalar.
template <typename T>
Var<T> sum(Var<T> x);

/// Stable scalar logistic used by the sigmoid op; exposed for tests.
template <typename T>
T stable_sigmoid(T x);

}  // namespace erfseg
