#pragma once

#include <span>
#include <vector>

#include "eretinex/tensor.hpp"

// Differentiable tensor ops. Feature maps are [C, H, W]; convolution
// weights are [C_out, C_in, k, k] (depthwise: [C, 1, k, k]); biases are
// [C_out] and may be passed as an undefined tensor to mean "no bias".
// Every op is instantiated for float and double.
namespace eretinex::ops {

// Binary elementwise ops broadcast operands of equal rank: each axis must
// match or be 1 on one side.
template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <class T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset);

template <class T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <class T> BasicTensor<T> relu(const BasicTensor<T>& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class T> BasicTensor<T> gelu(const BasicTensor<T>& x);
template <class T> BasicTensor<T> softplus(const BasicTensor<T>& x);
// Gradient passes through on [lo, hi] and is zero outside.
template <class T> BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);

template <class T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <class T> BasicTensor<T> mean(const BasicTensor<T>& x);
template <class T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape dims);

// [C,H,W] -> [C,1,1]
template <class T> BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);
// [C,H,W] -> [1,H,W], mean across channels
template <class T> BasicTensor<T> channel_mean(const BasicTensor<T>& x);
template <class T> BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);
template <class T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride,
                                std::size_t padding);
template <class T> BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input);

// mean(|pred - target|) as a scalar
template <class T> BasicTensor<T> mae_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

}  // namespace eretinex::ops
