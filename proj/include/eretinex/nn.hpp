#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eretinex/ops.hpp"
#include "eretinex/tensor.hpp"

namespace eretinex::nn {

using Rng = std::mt19937_64;

template <class T>
struct Parameter {
    std::string name;
    BasicTensor<T> tensor;
};

// Owns the name -> tensor registry of a model. Names are dotted paths,
// e.g. "igt.block0.dwconv.weight", and must be unique.
template <class T>
class ParameterList {
  public:
    BasicTensor<T> create(const std::string& name, Shape dims);

    std::vector<Parameter<T>>& items() noexcept { return items_; }
    const std::vector<Parameter<T>>& items() const noexcept { return items_; }
    const Parameter<T>* find(const std::string& name) const;
    std::size_t element_count() const;

    void zero_grad();

  private:
    std::vector<Parameter<T>> items_;
};

// Kaiming-uniform with gain sqrt(2): U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <class T>
void kaiming_uniform(BasicTensor<T>& weight, std::size_t fan_in, Rng& rng);

template <class T>
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(ParameterList<T>& params, const std::string& prefix, std::size_t c_in, std::size_t c_out,
           std::size_t kernel, std::size_t stride, Rng& rng);

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        return ops::conv2d(x, weight_, bias_, stride_, weight_.dim(2) / 2);
    }

    const BasicTensor<T>& weight() const { return weight_; }
    const BasicTensor<T>& bias() const { return bias_; }

  private:
    BasicTensor<T> weight_;
    BasicTensor<T> bias_;
    std::size_t stride_ = 1;
};

template <class T>
class DepthwiseConv2d {
  public:
    DepthwiseConv2d() = default;
    DepthwiseConv2d(ParameterList<T>& params, const std::string& prefix, std::size_t channels,
                    std::size_t kernel, Rng& rng);

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        return ops::depthwise_conv2d(x, weight_, bias_, 1, weight_.dim(2) / 2);
    }

  private:
    BasicTensor<T> weight_;
    BasicTensor<T> bias_;
};

// Learned stride-2 convolution; halves H and W, which must be even.
template <class T>
class Downsample {
  public:
    Downsample() = default;
    Downsample(ParameterList<T>& params, const std::string& prefix, std::size_t c_in,
               std::size_t c_out, std::size_t kernel, Rng& rng)
        : conv_(params, prefix, c_in, c_out, kernel, 2, rng) {}

    BasicTensor<T> operator()(const BasicTensor<T>& x) const;

  private:
    Conv2d<T> conv_;
};

// Nearest-neighbour x2 followed by a stride-1 convolution.
template <class T>
class Upsample {
  public:
    Upsample() = default;
    Upsample(ParameterList<T>& params, const std::string& prefix, std::size_t c_in,
             std::size_t c_out, std::size_t kernel, Rng& rng)
        : conv_(params, prefix, c_in, c_out, kernel, 1, rng) {}

    BasicTensor<T> operator()(const BasicTensor<T>& x) const {
        return conv_(ops::upsample_nearest2x(x));
    }

  private:
    Conv2d<T> conv_;
};

/// Channel attention conditioned on an optional guidance feature.
///
///   w   = sigmoid(fc2(gelu(fc1(GAP(x) ++ proj(GAP(context))))))
///   out = x * w   (w broadcast over H, W)
///
/// `++` is channel concatenation. Without a context the second half of the
/// descriptor is zeros. proj is a 1x1 map applied after pooling, which
/// equals pooling a 1x1-projected context since both are linear.
template <class T>
class ChannelAttention {
  public:
    ChannelAttention() = default;
    // Without `with_context` no projection is created and any context passed
    // at call time is rejected.
    ChannelAttention(ParameterList<T>& params, const std::string& prefix, std::size_t channels,
                     Rng& rng, bool with_context = true);

    BasicTensor<T> operator()(const BasicTensor<T>& x,
                              const std::optional<BasicTensor<T>>& context) const;

    static std::size_t hidden_size(std::size_t channels) { return std::max<std::size_t>(2, channels / 4); }

  private:
    std::size_t channels_ = 0;
    bool with_context_ = true;
    Conv2d<T> context_proj_;
    Conv2d<T> fc1_;
    Conv2d<T> fc2_;
};

}  // namespace eretinex::nn
