#include "eretinex/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "eretinex/error.hpp"

namespace eretinex::ops {

namespace {

template <class T>
using Node = typename BasicTensor<T>::Node;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Operands padded to rank 4; a stride of 0 marks a broadcast axis.
struct BroadcastPlan {
    Shape out;
    std::array<std::size_t, 4> dims{1, 1, 1, 1};
    std::array<std::size_t, 4> a_stride{0, 0, 0, 0};
    std::array<std::size_t, 4> b_stride{0, 0, 0, 0};
    bool same = false;
};

std::array<std::size_t, 4> padded_strides(const Shape& s, const std::array<std::size_t, 4>& out) {
    std::array<std::size_t, 4> d{1, 1, 1, 1};
    std::copy(s.begin(), s.end(), d.begin() + static_cast<std::ptrdiff_t>(4 - s.size()));
    std::array<std::size_t, 4> st{};
    std::size_t acc = 1;
    for (int i = 3; i >= 0; --i) {
        st[i] = (d[i] == 1 && out[i] != 1) ? 0 : acc;
        acc *= d[i];
    }
    return st;
}

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    BroadcastPlan p;
    if (a.size() != b.size() || a.size() > 4) shape_error(op, a, b);
    p.same = a == b;
    p.out.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1) shape_error(op, a, b);
        p.out[i] = std::max(a[i], b[i]);
    }
    std::copy(p.out.begin(), p.out.end(), p.dims.begin() + static_cast<std::ptrdiff_t>(4 - a.size()));
    p.a_stride = padded_strides(a, p.dims);
    p.b_stride = padded_strides(b, p.dims);
    return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
    std::size_t o = 0;
    for (std::size_t i0 = 0; i0 < p.dims[0]; ++i0)
        for (std::size_t i1 = 0; i1 < p.dims[1]; ++i1)
            for (std::size_t i2 = 0; i2 < p.dims[2]; ++i2)
                for (std::size_t i3 = 0; i3 < p.dims[3]; ++i3, ++o) {
                    std::size_t ia = i0 * p.a_stride[0] + i1 * p.a_stride[1] +
                                     i2 * p.a_stride[2] + i3 * p.a_stride[3];
                    std::size_t ib = i0 * p.b_stride[0] + i1 * p.b_stride[1] +
                                     i2 * p.b_stride[2] + i3 * p.b_stride[3];
                    f(o, ia, ib);
                }
}

// Shared driver for the four binary ops. `fwd(a, b)` computes the value,
// `da(a, b, out)` and `db(a, b, out)` the local partials.
template <class T, class Fwd, class Da, class Db>
BasicTensor<T> binary(const char* name, const BasicTensor<T>& a, const BasicTensor<T>& b, Fwd fwd,
                      Da da, Db db) {
    BroadcastPlan p = plan_broadcast(name, a.dims(), b.dims());
    std::vector<T> out(shape_numel(p.out));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    if (p.same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    } else {
        for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            out[o] = fwd(av[ia], bv[ib]);
        });
    }
    count_flops(out.size());
    return BasicTensor<T>::make_result(p.out, std::move(out), {a, b}, [p, da, db](Node<T>& self) {
        const T* av = self.parents[0]->values.data();
        const T* bv = self.parents[1]->values.data();
        const T* ov = self.values.data();
        const T* g = self.grad.data();
        auto* ga = grad_sink<T>(*self.parents[0]);
        auto* gb = grad_sink<T>(*self.parents[1]);
        if (p.same) {
            for (std::size_t i = 0; i < self.values.size(); ++i) {
                if (ga) (*ga)[i] += g[i] * da(av[i], bv[i], ov[i]);
                if (gb) (*gb)[i] += g[i] * db(av[i], bv[i], ov[i]);
            }
            return;
        }
        for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            if (ga) (*ga)[ia] += g[o] * da(av[ia], bv[ib], ov[o]);
            if (gb) (*gb)[ib] += g[o] * db(av[ia], bv[ib], ov[o]);
        });
    });
}

template <class T, class Fwd, class Deriv>
BasicTensor<T> unary(const BasicTensor<T>& x, Fwd fwd, Deriv deriv) {
    std::vector<T> out(x.numel());
    const T* xv = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    count_flops(out.size());
    return BasicTensor<T>::make_result(x.dims(), std::move(out), {x}, [deriv](Node<T>& self) {
        auto* gx = grad_sink<T>(*self.parents[0]);
        if (!gx) return;
        const T* xv = self.parents[0]->values.data();
        for (std::size_t i = 0; i < self.values.size(); ++i) {
            (*gx)[i] += self.grad[i] * deriv(xv[i], self.values[i]);
        }
    });
}

void require_chw(const char* op, const Shape& s) {
    if (s.size() != 3) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(op) + ": expected a [C,H,W] tensor, got " + shape_str(s));
    }
}

// Output indices o in [lo, hi) for which o*stride + k - pad lands in [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                std::size_t stride, std::size_t pad) {
    std::size_t lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    if (in + pad < k + 1) return {0, 0};
    std::size_t hi = (in - 1 + pad - k) / stride + 1;
    hi = std::min(hi, out);
    if (lo >= hi) return {0, 0};
    return {lo, hi};
}

struct ConvGeom {
    std::size_t c_in, h, w, c_out, k, stride, pad, ho, wo;
};

// acc[o] (+)= weight * in[o*stride + k - pad] along one output row.
template <class T>
inline void axpy_row(T* out, const T* in_row, T wv, std::size_t lo, std::size_t hi,
                     std::size_t stride, std::ptrdiff_t shift) {
    if (stride == 1) {
        const T* src = in_row + shift;
        for (std::size_t x = lo; x < hi; ++x) out[x] += wv * src[x];
    } else {
        for (std::size_t x = lo; x < hi; ++x) {
            out[x] += wv * in_row[static_cast<std::ptrdiff_t>(x * stride) + shift];
        }
    }
}

template <class T>
inline void scatter_row(T* gin_row, const T* g_out, T wv, std::size_t lo, std::size_t hi,
                        std::size_t stride, std::ptrdiff_t shift) {
    if (stride == 1) {
        T* dst = gin_row + shift;
        for (std::size_t x = lo; x < hi; ++x) dst[x] += wv * g_out[x];
    } else {
        for (std::size_t x = lo; x < hi; ++x) {
            gin_row[static_cast<std::ptrdiff_t>(x * stride) + shift] += wv * g_out[x];
        }
    }
}

template <class T>
inline T dot_row(const T* g_out, const T* in_row, std::size_t lo, std::size_t hi,
                 std::size_t stride, std::ptrdiff_t shift) {
    T acc = 0;
    if (stride == 1) {
        const T* src = in_row + shift;
        for (std::size_t x = lo; x < hi; ++x) acc += g_out[x] * src[x];
    } else {
        for (std::size_t x = lo; x < hi; ++x) {
            acc += g_out[x] * in_row[static_cast<std::ptrdiff_t>(x * stride) + shift];
        }
    }
    return acc;
}

// Visits every (output plane, input plane, ky, kx) tap with its valid
// output window. Depthwise convolution pairs plane c with c only.
template <class F>
void for_each_tap(const ConvGeom& g, bool depthwise, F&& f) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
        std::size_t ci_begin = depthwise ? co : 0;
        std::size_t ci_end = depthwise ? co + 1 : g.c_in;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
                auto [y0, y1] = valid_range(g.ho, g.h, ky, g.stride, g.pad);
                if (y0 >= y1) continue;
                for (std::size_t kx = 0; kx < g.k; ++kx) {
                    auto [x0, x1] = valid_range(g.wo, g.w, kx, g.stride, g.pad);
                    if (x0 >= x1) continue;
                    f(co, ci, ky, kx, y0, y1, x0, x1);
                }
            }
        }
    }
}

template <class T>
BasicTensor<T> conv_impl(const char* name, const BasicTensor<T>& input,
                         const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                         std::size_t stride, std::size_t padding, bool depthwise) {
    require_chw(name, input.dims());
    const Shape& wd = weight.dims();
    if (wd.size() != 4 || wd[2] != wd[3] || wd[2] % 2 == 0) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(name) + ": weight must be [C_out,C_in,k,k] with odd k, got " +
                        shape_str(wd));
    }
    if (stride == 0) throw Error(ErrorCode::InvalidArgument, std::string(name) + ": stride 0");
    ConvGeom g{input.dim(0), input.dim(1), input.dim(2), wd[0], wd[2], stride, padding, 0, 0};
    bool channels_ok = depthwise ? (wd[1] == 1 && wd[0] == g.c_in) : wd[1] == g.c_in;
    if (!channels_ok) shape_error(name, input.dims(), wd);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.c_out)) {
        shape_error(name, wd, bias.dims());
    }
    if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) shape_error(name, input.dims(), wd);
    g.ho = conv_output_size(g.h, g.k, stride, padding);
    g.wo = conv_output_size(g.w, g.k, stride, padding);

    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.ho * g.wo;
    const std::size_t w_per_out = depthwise ? 1 : g.c_in;
    std::vector<T> out(g.c_out * out_plane, T(0));
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    if (bias.defined()) {
        const T* bv = bias.values().data();
        for (std::size_t co = 0; co < g.c_out; ++co) {
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(co * out_plane), out_plane, bv[co]);
        }
    }
    auto weight_at = [&](std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) {
        std::size_t cw = depthwise ? 0 : ci;
        return ((co * w_per_out + cw) * g.k + ky) * g.k + kx;
    };
    for_each_tap(g, depthwise, [&](std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx,
                                   std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
        T w = wv[weight_at(co, ci, ky, kx)];
        auto shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
        for (std::size_t oy = y0; oy < y1; ++oy) {
            const T* in_row = xv + ci * in_plane + (oy * g.stride + ky - g.pad) * g.w;
            axpy_row(out.data() + co * out_plane + oy * g.wo, in_row, w, x0, x1, g.stride, shift);
        }
    });

    std::uint64_t macs = static_cast<std::uint64_t>(g.k * g.k * w_per_out) * g.c_out * out_plane;
    count_flops(2 * macs + (bias.defined() ? g.c_out * out_plane : 0));

    std::vector<BasicTensor<T>> inputs{input, weight};
    if (bias.defined()) inputs.push_back(bias);
    bool has_bias = bias.defined();
    return BasicTensor<T>::make_result(
        {g.c_out, g.ho, g.wo}, std::move(out), inputs,
        [g, depthwise, has_bias, in_plane, out_plane, w_per_out](Node<T>& self) {
            const T* xv = self.parents[0]->values.data();
            const T* wv = self.parents[1]->values.data();
            const T* go = self.grad.data();
            auto* gx = grad_sink<T>(*self.parents[0]);
            auto* gw = grad_sink<T>(*self.parents[1]);
            auto weight_at = [&](std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) {
                std::size_t cw = depthwise ? 0 : ci;
                return ((co * w_per_out + cw) * g.k + ky) * g.k + kx;
            };
            if (gx || gw) {
                for_each_tap(g, depthwise,
                             [&](std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx,
                                 std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
                                 auto shift = static_cast<std::ptrdiff_t>(kx) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                                 std::size_t wi = weight_at(co, ci, ky, kx);
                                 T w = wv[wi];
                                 T acc = 0;
                                 for (std::size_t oy = y0; oy < y1; ++oy) {
                                     std::size_t row = ci * in_plane + (oy * g.stride + ky - g.pad) * g.w;
                                     const T* g_row = go + co * out_plane + oy * g.wo;
                                     if (gx) scatter_row(gx->data() + row, g_row, w, x0, x1, g.stride, shift);
                                     if (gw) acc += dot_row(g_row, xv + row, x0, x1, g.stride, shift);
                                 }
                                 if (gw) (*gw)[wi] += acc;
                             });
            }
            if (has_bias) {
                if (auto* gb = grad_sink<T>(*self.parents[2])) {
                    for (std::size_t co = 0; co < g.c_out; ++co) {
                        T acc = 0;
                        for (std::size_t i = 0; i < out_plane; ++i) acc += go[co * out_plane + i];
                        (*gb)[co] += acc;
                    }
                }
            }
        });
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(1); });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(-1); });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
        [](T x, T, T) { return x; });
}

template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary<T>(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T, T y, T out) { return -out / y; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    return unary<T>(
        x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
    return unary<T>(
        x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return unary<T>(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T out) { return out * (T(1) - out); });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return unary<T>(
        x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    constexpr T c = static_cast<T>(0.044715);
    return unary<T>(
        x,
        [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); },
        [](T v, T) {
            T t = std::tanh(k * (v + c * v * v * v));
            return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
        });
}

template <class T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
    return unary<T>(
        x, [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
        [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
    return unary<T>(
        x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
        [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    T acc = 0;
    for (T v : x.values()) acc += v;
    count_flops(x.numel());
    return BasicTensor<T>::make_result({}, {acc}, {x}, [](Node<T>& self) {
        if (auto* gx = grad_sink<T>(*self.parents[0])) {
            for (auto& g : *gx) g += self.grad[0];
        }
    });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    T acc = 0;
    for (T v : x.values()) acc += v;
    T n = static_cast<T>(x.numel());
    count_flops(x.numel());
    return BasicTensor<T>::make_result({}, {acc / n}, {x}, [n](Node<T>& self) {
        if (auto* gx = grad_sink<T>(*self.parents[0])) {
            T g = self.grad[0] / n;
            for (auto& v : *gx) v += g;
        }
    });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape dims) {
    if (shape_numel(dims) != x.numel()) shape_error("reshape", x.dims(), dims);
    std::vector<T> out(x.values().begin(), x.values().end());
    return BasicTensor<T>::make_result(std::move(dims), std::move(out), {x}, [](Node<T>& self) {
        if (auto* gx = grad_sink<T>(*self.parents[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
        }
    });
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
    require_chw("global_avg_pool", x.dims());
    std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<T> out(c);
    const T* xv = x.values().data();
    for (std::size_t i = 0; i < c; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < plane; ++j) acc += xv[i * plane + j];
        out[i] = acc / static_cast<T>(plane);
    }
    count_flops(x.numel());
    return BasicTensor<T>::make_result({c, 1, 1}, std::move(out), {x}, [c, plane](Node<T>& self) {
        if (auto* gx = grad_sink<T>(*self.parents[0])) {
            for (std::size_t i = 0; i < c; ++i) {
                T g = self.grad[i] / static_cast<T>(plane);
                for (std::size_t j = 0; j < plane; ++j) (*gx)[i * plane + j] += g;
            }
        }
    });
}

template <class T>
BasicTensor<T> channel_mean(const BasicTensor<T>& x) {
    require_chw("channel_mean", x.dims());
    std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<T> out(plane, T(0));
    const T* xv = x.values().data();
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < plane; ++j) out[j] += xv[i * plane + j];
    for (auto& v : out) v /= static_cast<T>(c);
    count_flops(x.numel());
    return BasicTensor<T>::make_result({1, x.dim(1), x.dim(2)}, std::move(out), {x},
                                       [c, plane](Node<T>& self) {
                                           if (auto* gx = grad_sink<T>(*self.parents[0])) {
                                               for (std::size_t i = 0; i < c; ++i)
                                                   for (std::size_t j = 0; j < plane; ++j)
                                                       (*gx)[i * plane + j] +=
                                                           self.grad[j] / static_cast<T>(c);
                                           }
                                       });
}

template <class T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
    if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_channels: no inputs");
    require_chw("concat_channels", parts[0].dims());
    std::size_t h = parts[0].dim(1), w = parts[0].dim(2), c = 0;
    for (const auto& p : parts) {
        require_chw("concat_channels", p.dims());
        if (p.dim(1) != h || p.dim(2) != w) shape_error("concat_channels", parts[0].dims(), p.dims());
        c += p.dim(0);
    }
    std::vector<T> out;
    out.reserve(c * h * w);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return BasicTensor<T>::make_result({c, h, w}, std::move(out), parts, [](Node<T>& self) {
        std::size_t offset = 0;
        for (auto& parent : self.parents) {
            std::size_t n = parent->values.size();
            if (auto* g = grad_sink<T>(*parent)) {
                for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[offset + i];
            }
            offset += n;
        }
    });
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
    return conv_impl<T>("conv2d", input, weight, bias, stride, padding, false);
}

template <class T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride,
                                std::size_t padding) {
    return conv_impl<T>("depthwise_conv2d", input, weight, bias, stride, padding, true);
}

template <class T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input) {
    require_chw("upsample_nearest2x", input.dims());
    std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    std::size_t ho = 2 * h, wo = 2 * w;
    std::vector<T> out(c * ho * wo);
    const T* xv = input.values().data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t x = 0; x < wo; ++x)
                out[(ch * ho + y) * wo + x] = xv[(ch * h + y / 2) * w + x / 2];
    return BasicTensor<T>::make_result({c, ho, wo}, std::move(out), {input},
                                       [c, h, w, ho, wo](Node<T>& self) {
                                           auto* gx = grad_sink<T>(*self.parents[0]);
                                           if (!gx) return;
                                           for (std::size_t ch = 0; ch < c; ++ch)
                                               for (std::size_t y = 0; y < ho; ++y)
                                                   for (std::size_t x = 0; x < wo; ++x)
                                                       (*gx)[(ch * h + y / 2) * w + x / 2] +=
                                                           self.grad[(ch * ho + y) * wo + x];
                                       });
}

template <class T>
BasicTensor<T> mae_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.dims() != target.dims()) shape_error("mae_loss", pred.dims(), target.dims());
    const T* pv = pred.values().data();
    const T* tv = target.values().data();
    T acc = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) acc += std::abs(pv[i] - tv[i]);
    T n = static_cast<T>(pred.numel());
    count_flops(3 * pred.numel());
    return BasicTensor<T>::make_result({}, {acc / n}, {pred, target}, [n](Node<T>& self) {
        const T* pv = self.parents[0]->values.data();
        const T* tv = self.parents[1]->values.data();
        auto* gp = grad_sink<T>(*self.parents[0]);
        auto* gt = grad_sink<T>(*self.parents[1]);
        T g = self.grad[0] / n;
        for (std::size_t i = 0; i < self.parents[0]->values.size(); ++i) {
            T d = pv[i] - tv[i];
            T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (gp) (*gp)[i] += g * s;
            if (gt) (*gt)[i] -= g * s;
        }
    });
}

#define ERETINEX_INSTANTIATE_OPS(T)                                                              \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                     \
    template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                      \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                         \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                         \
    template BasicTensor<T> softplus(const BasicTensor<T>&);                                     \
    template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);                                  \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                          \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                         \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                               \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                              \
    template BasicTensor<T> channel_mean(const BasicTensor<T>&);                                 \
    template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);                 \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                   const BasicTensor<T>&, std::size_t, std::size_t);             \
    template BasicTensor<T> depthwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                             const BasicTensor<T>&, std::size_t, std::size_t);   \
    template BasicTensor<T> upsample_nearest2x(const BasicTensor<T>&);                           \
    template BasicTensor<T> mae_loss(const BasicTensor<T>&, const BasicTensor<T>&);

ERETINEX_INSTANTIATE_OPS(float)
ERETINEX_INSTANTIATE_OPS(double)

}  // namespace eretinex::ops
