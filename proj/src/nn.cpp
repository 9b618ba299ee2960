#include "eretinex/nn.hpp"

#include <cmath>

#include "eretinex/error.hpp"

namespace eretinex::nn {

template <class T>
BasicTensor<T> ParameterList<T>::create(const std::string& name, Shape dims) {
    if (find(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter name " + name);
    BasicTensor<T> t(std::move(dims));
    t.set_requires_grad(true);
    items_.push_back({name, t});
    return t;
}

template <class T>
const Parameter<T>* ParameterList<T>::find(const std::string& name) const {
    for (const auto& p : items_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

template <class T>
std::size_t ParameterList<T>::element_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
}

template <class T>
void ParameterList<T>::zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
}

template <class T>
void kaiming_uniform(BasicTensor<T>& weight, std::size_t fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : weight.mutable_values()) v = static_cast<T>(dist(rng));
}

template <class T>
Conv2d<T>::Conv2d(ParameterList<T>& params, const std::string& prefix, std::size_t c_in,
                  std::size_t c_out, std::size_t kernel, std::size_t stride, Rng& rng)
    : stride_(stride) {
    weight_ = params.create(prefix + ".weight", {c_out, c_in, kernel, kernel});
    bias_ = params.create(prefix + ".bias", {c_out});
    kaiming_uniform(weight_, c_in * kernel * kernel, rng);
}

template <class T>
DepthwiseConv2d<T>::DepthwiseConv2d(ParameterList<T>& params, const std::string& prefix,
                                    std::size_t channels, std::size_t kernel, Rng& rng) {
    weight_ = params.create(prefix + ".weight", {channels, 1, kernel, kernel});
    bias_ = params.create(prefix + ".bias", {channels});
    kaiming_uniform(weight_, kernel * kernel, rng);
}

template <class T>
BasicTensor<T> Downsample<T>::operator()(const BasicTensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
        throw Error(ErrorCode::ShapeMismatch,
                    "downsample needs even spatial dims, got " + shape_str(x.dims()));
    }
    return conv_(x);
}

template <class T>
ChannelAttention<T>::ChannelAttention(ParameterList<T>& params, const std::string& prefix,
                                      std::size_t channels, Rng& rng, bool with_context)
    : channels_(channels), with_context_(with_context) {
    if (with_context_) context_proj_ = Conv2d<T>(params, prefix + ".context_proj", channels, channels, 1, 1, rng);
    fc1_ = Conv2d<T>(params, prefix + ".fc1", 2 * channels, hidden_size(channels), 1, 1, rng);
    fc2_ = Conv2d<T>(params, prefix + ".fc2", hidden_size(channels), channels, 1, 1, rng);
}

template <class T>
BasicTensor<T> ChannelAttention<T>::operator()(const BasicTensor<T>& x,
                                               const std::optional<BasicTensor<T>>& context) const {
    if (x.rank() != 3 || x.dim(0) != channels_) {
        throw Error(ErrorCode::ShapeMismatch, "channel attention over " + std::to_string(channels_) +
                                                  " channels got " + shape_str(x.dims()));
    }
    BasicTensor<T> pooled = ops::global_avg_pool(x);
    BasicTensor<T> ctx;
    if (context) {
        if (!with_context_) throw Error(ErrorCode::InvalidArgument, "attention built without a context branch");
        if (context->rank() != 3 || context->dim(0) != channels_) {
            throw Error(ErrorCode::ShapeMismatch, "attention context " + shape_str(context->dims()) +
                                                      " does not match input " + shape_str(x.dims()));
        }
        ctx = context_proj_(ops::global_avg_pool(*context));
    } else {
        ctx = BasicTensor<T>(Shape{channels_, 1, 1});
    }
    BasicTensor<T> descriptor = ops::concat_channels<T>({pooled, ctx});
    BasicTensor<T> gate = ops::sigmoid(fc2_(ops::gelu(fc1_(descriptor))));
    return ops::mul(x, gate);
}

template class ParameterList<float>;
template class ParameterList<double>;
template void kaiming_uniform<float>(BasicTensor<float>&, std::size_t, Rng&);
template void kaiming_uniform<double>(BasicTensor<double>&, std::size_t, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class DepthwiseConv2d<float>;
template class DepthwiseConv2d<double>;
template class Downsample<float>;
template class Downsample<double>;
template class Upsample<float>;
template class Upsample<double>;
template class ChannelAttention<float>;
template class ChannelAttention<double>;

}  // namespace eretinex::nn
