#include "eretinex/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "eretinex/error.hpp"
#include "eretinex/ops.hpp"

namespace eretinex {

namespace {

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw Error(ErrorCode::InvalidArgument, "invalid boolean for " + std::string(key) + ": " + std::string(v));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw Error(ErrorCode::InvalidArgument, "invalid integer for " + std::string(key) + ": " + std::string(v));
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
BasicTensor<T> zeros_like(const BasicTensor<T>& t) {
    return BasicTensor<T>(t.dims());
}

}  // namespace

std::string_view to_string(Fusion fusion) noexcept {
    switch (fusion) {
        case Fusion::SeriesI: return "series1";
        case Fusion::SeriesII: return "series2";
        case Fusion::Parallel: return "parallel";
    }
    return "series1";
}

Fusion parse_fusion(std::string_view text) {
    if (text == "series1" || text == "SeriesI") return Fusion::SeriesI;
    if (text == "series2" || text == "SeriesII") return Fusion::SeriesII;
    if (text == "parallel" || text == "Parallel") return Fusion::Parallel;
    throw Error(ErrorCode::InvalidArgument, "unknown fusion topology: " + std::string(text));
}

void ModelConfig::validate() const {
    if (base_channels == 0) throw Error(ErrorCode::InvalidArgument, "base_channels must be > 0");
    if (blocks_per_stage == 0) throw Error(ErrorCode::InvalidArgument, "blocks_per_stage must be >= 1");
    if (kernel_size % 2 == 0 || dw_kernel % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, "kernel sizes must be odd");
    }
    if (voxel_bins == 0) throw Error(ErrorCode::InvalidArgument, "voxel_bins must be > 0");
}

void ModelConfig::set(std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    if (key == "base_channels") base_channels = parse_size(key, value);
    else if (key == "blocks_per_stage") blocks_per_stage = parse_size(key, value);
    else if (key == "kernel_size") kernel_size = parse_size(key, value);
    else if (key == "dw_kernel") dw_kernel = parse_size(key, value);
    else if (key == "voxel_bins") voxel_bins = parse_size(key, value);
    else if (key == "fusion") fusion = parse_fusion(value);
    else if (key == "use_image_illum") use_image_illum = parse_bool(key, value);
    else if (key == "use_event_illum") use_event_illum = parse_bool(key, value);
    else if (key == "use_image_guide") use_image_guide = parse_bool(key, value);
    else if (key == "use_event_guide") use_event_guide = parse_bool(key, value);
    else if (key == "use_channel_attention") use_channel_attention = parse_bool(key, value);
    else if (key == "use_dwconv") use_dwconv = parse_bool(key, value);
    else if (key == "use_image_branch") use_image_branch = parse_bool(key, value);
    else if (key == "use_event_branch") use_event_branch = parse_bool(key, value);
    else if (key == "voxel_normalize") voxel_normalize = parse_bool(key, value);
    else if (key == "lit_residual") lit_residual = parse_bool(key, value);
    else throw Error(ErrorCode::InvalidArgument, "unknown model config key: " + std::string(key));
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "base_channels=" << base_channels << '\n'
       << "blocks_per_stage=" << blocks_per_stage << '\n'
       << "kernel_size=" << kernel_size << '\n'
       << "dw_kernel=" << dw_kernel << '\n'
       << "voxel_bins=" << voxel_bins << '\n'
       << "fusion=" << to_string(fusion) << '\n'
       << "use_image_illum=" << use_image_illum << '\n'
       << "use_event_illum=" << use_event_illum << '\n'
       << "use_image_guide=" << use_image_guide << '\n'
       << "use_event_guide=" << use_event_guide << '\n'
       << "use_channel_attention=" << use_channel_attention << '\n'
       << "use_dwconv=" << use_dwconv << '\n'
       << "use_image_branch=" << use_image_branch << '\n'
       << "use_event_branch=" << use_event_branch << '\n'
       << "voxel_normalize=" << voxel_normalize << '\n'
       << "lit_residual=" << lit_residual << '\n';
    return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
    ModelConfig cfg;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        if (line.empty() || line.front() == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::InvalidArgument, "config line without '=': " + std::string(line));
        }
        cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

template <class T>
LightUpMap<T> LightUpMap<T>::constant(std::size_t height, std::size_t width, T value) {
    if (!(value > T(0))) throw Error(ErrorCode::InvalidArgument, "light-up map must be positive");
    return {BasicTensor<T>(Shape{1, height, width}, value)};
}

template <class T>
BasicTensor<T> light_up(const BasicTensor<T>& image, const LightUpMap<T>& lmap) {
    FlopScope scope("light_up");
    return ops::mul(image, lmap.data);
}

template <class T>
GuidedBlock<T>::GuidedBlock(nn::ParameterList<T>& params, const std::string& prefix,
                            const ModelConfig& config, bool with_guide, nn::Rng& rng)
    : use_dwconv_(config.use_dwconv), use_attention_(config.use_channel_attention) {
    const std::size_t c = config.base_channels;
    down_ = nn::Downsample<T>(params, prefix + ".down", c, c, config.kernel_size, rng);
    if (use_dwconv_) dwconv_ = nn::DepthwiseConv2d<T>(params, prefix + ".dwconv", c, config.dw_kernel, rng);
    up_ = nn::Upsample<T>(params, prefix + ".up", c, c, config.kernel_size, rng);
    if (use_attention_) attention_ = nn::ChannelAttention<T>(params, prefix + ".attn", c, rng, with_guide);
}

template <class T>
BasicTensor<T> GuidedBlock<T>::operator()(const BasicTensor<T>& x,
                                          const std::optional<BasicTensor<T>>& guide) const {
    BasicTensor<T> h = down_(x);
    if (use_dwconv_) h = ops::gelu(dwconv_(h));
    h = up_(h);
    if (use_attention_) h = attention_(h, guide);
    return ops::add(x, h);
}

template <class T>
BasicERetinexModel<T>::BasicERetinexModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    nn::Rng rng(seed);
    const std::size_t c = config_.base_channels, k = config_.kernel_size;

    est_in_ = nn::Conv2d<T>(params_, "estimator.in_proj", 3 + 1 + config_.voxel_bins, c, 1, 1, rng);
    est_dw_ = nn::DepthwiseConv2d<T>(params_, "estimator.dwconv", c, config_.dw_kernel, rng);
    est_out_ = nn::Conv2d<T>(params_, "estimator.out_proj", c, 1, 1, 1, rng);

    embed_lit_ = nn::Conv2d<T>(params_, "embed.lit", 3, c, k, 1, rng);
    if (config_.use_image_guide) embed_image_ = nn::Conv2d<T>(params_, "embed.image_guide", 3, c, k, 1, rng);
    if (config_.use_event_guide) {
        embed_event_ = nn::Conv2d<T>(params_, "embed.event_guide", config_.voxel_bins, c, k, 1, rng);
    }
    for (std::size_t i = 0; i < config_.blocks_per_stage; ++i) {
        image_stage_.emplace_back(params_, "igt.block" + std::to_string(i), config_, config_.use_image_guide, rng);
    }
    for (std::size_t i = 0; i < config_.blocks_per_stage; ++i) {
        event_stage_.emplace_back(params_, "egt.block" + std::to_string(i), config_, config_.use_event_guide, rng);
    }
    if (config_.fusion == Fusion::Parallel) merge_ = nn::Conv2d<T>(params_, "fuse.merge", 2 * c, c, 1, 1, rng);
    head_ = nn::Conv2d<T>(params_, "head.out", c, 3, k, 1, rng);
}

template <class T>
BasicTensor<T> BasicERetinexModel<T>::prepare_voxels(const BasicTensor<T>& voxels) const {
    if (!config_.voxel_normalize) return voxels;
    T peak = 0;
    for (T v : voxels.values()) peak = std::max(peak, std::abs(v));
    if (peak == T(0)) return voxels;
    return ops::scale(voxels, T(1) / peak);
}

template <class T>
LightUpMap<T> BasicERetinexModel<T>::estimate_illumination(const BasicTensor<T>& image,
                                                           const BasicTensor<T>& voxels) const {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw Error(ErrorCode::ShapeMismatch, "image must be [3,H,W], got " + shape_str(image.dims()));
    }
    if (voxels.rank() != 3 || voxels.dim(0) != config_.voxel_bins || voxels.dim(1) != image.dim(1) ||
        voxels.dim(2) != image.dim(2)) {
        throw Error(ErrorCode::ShapeMismatch, "voxels " + shape_str(voxels.dims()) +
                                                  " do not match image " + shape_str(image.dims()));
    }
    FlopScope scope("estimator");
    BasicTensor<T> img = config_.use_image_illum ? image : zeros_like(image);
    BasicTensor<T> prior = ops::channel_mean(img);
    BasicTensor<T> vox = config_.use_event_illum ? prepare_voxels(voxels) : zeros_like(voxels);
    BasicTensor<T> h = ops::gelu(est_in_(ops::concat_channels<T>({img, prior, vox})));
    h = ops::gelu(est_dw_(h));
    return {ops::add_scalar(ops::softplus(est_out_(h)), T(1e-4))};
}

template <class T>
BasicTensor<T> BasicERetinexModel<T>::run_stage(const std::vector<GuidedBlock<T>>& stage, BasicTensor<T> x,
                                                const std::optional<BasicTensor<T>>& guide,
                                                const char* scope) const {
    FlopScope fs(scope);
    for (const auto& block : stage) x = block(x, guide);
    return x;
}

template <class T>
EnhanceResult<T> BasicERetinexModel<T>::enhance(const BasicTensor<T>& image, const BasicTensor<T>& voxels,
                                                const EnhanceOptions& options) const {
    BasicTensor<T> image_side = config_.use_image_branch ? image : zeros_like(image);
    BasicTensor<T> voxel_side = config_.use_event_branch ? voxels : zeros_like(voxels);

    EnhanceResult<T> r;
    if (options.lmap_override) {
        r.lmap = LightUpMap<T>::constant(image.dim(1), image.dim(2), static_cast<T>(*options.lmap_override));
        if (voxels.rank() != 3 || voxels.dim(1) != image.dim(1) || voxels.dim(2) != image.dim(2)) {
            throw Error(ErrorCode::ShapeMismatch, "voxels " + shape_str(voxels.dims()) +
                                                      " do not match image " + shape_str(image.dims()));
        }
    } else {
        r.lmap = estimate_illumination(image_side, voxel_side);
    }
    r.lit = light_up(image, r.lmap);

    BasicTensor<T> features;
    std::optional<BasicTensor<T>> image_guide, event_guide;
    {
        FlopScope fs("embed");
        features = ops::gelu(embed_lit_(r.lit));
        if (config_.use_image_guide) image_guide = ops::gelu(embed_image_(image_side));
        if (config_.use_event_guide) event_guide = ops::gelu(embed_event_(prepare_voxels(voxel_side)));
    }

    BasicTensor<T> mid_features;
    switch (config_.fusion) {
        case Fusion::SeriesI:
            features = run_stage(image_stage_, features, image_guide, "igt");
            mid_features = features;
            features = run_stage(event_stage_, features, event_guide, "egt");
            break;
        case Fusion::SeriesII:
            features = run_stage(event_stage_, features, event_guide, "egt");
            mid_features = features;
            features = run_stage(image_stage_, features, image_guide, "igt");
            break;
        case Fusion::Parallel: {
            BasicTensor<T> a = run_stage(image_stage_, features, image_guide, "igt");
            BasicTensor<T> b = run_stage(event_stage_, features, event_guide, "egt");
            mid_features = a;
            FlopScope fs("fuse");
            features = merge_(ops::concat_channels<T>({a, b}));
            break;
        }
    }

    FlopScope fs("head");
    auto project = [&](const BasicTensor<T>& f) {
        BasicTensor<T> rgb = head_(f);
        return config_.lit_residual ? ops::add(rgb, r.lit) : rgb;
    };
    r.out = ops::clamp(project(features), T(0), T(1));
    if (options.compute_mid) r.mid = project(mid_features);
    return r;
}

template <class T>
void BasicERetinexModel<T>::zero_parameters() {
    for (auto& p : params_.items()) {
        auto v = p.tensor.mutable_values();
        std::fill(v.begin(), v.end(), T(0));
    }
}

template <class T>
io::Checkpoint BasicERetinexModel<T>::to_checkpoint() const {
    return io::to_checkpoint(params_, config_.to_text());
}

template <class T>
BasicERetinexModel<T> BasicERetinexModel<T>::from_checkpoint(const io::Checkpoint& ckpt) {
    BasicERetinexModel model(ModelConfig::from_text(ckpt.config_text));
    io::apply_checkpoint(ckpt, model.params_);
    return model;
}

std::uint64_t conv_flops(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t out_h,
                         std::size_t out_w, bool bias) {
    std::uint64_t plane = static_cast<std::uint64_t>(out_h) * out_w;
    return 2ull * kernel * kernel * c_in * c_out * plane + (bias ? c_out * plane : 0);
}

CostReport count_cost(const ModelConfig& config, std::size_t height, std::size_t width) {
    ERetinexModel model(config);
    NoGradGuard no_grad;
    Tensor image(Shape{3, height, width});
    Tensor voxels(Shape{config.voxel_bins, height, width});
    CostReport report;
    report.params = model.parameters().element_count();
    FlopCounter counter;
    EnhanceOptions options;
    options.compute_mid = false;
    model.enhance(image, voxels, options);
    report.flops = counter.total();
    report.flops_by_stage = counter.by_scope();
    return report;
}

template struct LightUpMap<float>;
template struct LightUpMap<double>;
template BasicTensor<float> light_up<float>(const BasicTensor<float>&, const LightUpMap<float>&);
template BasicTensor<double> light_up<double>(const BasicTensor<double>&, const LightUpMap<double>&);
template class GuidedBlock<float>;
template class GuidedBlock<double>;
template class BasicERetinexModel<float>;
template class BasicERetinexModel<double>;

}  // namespace eretinex
