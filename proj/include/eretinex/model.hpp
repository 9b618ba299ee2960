#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "eretinex/events.hpp"
#include "eretinex/io.hpp"
#include "eretinex/nn.hpp"

namespace eretinex {

enum class Fusion { SeriesI, SeriesII, Parallel };

std::string_view to_string(Fusion fusion) noexcept;
Fusion parse_fusion(std::string_view text);

/// Architecture hyperparameters and ablation switches.
///
/// Text form (embedded in checkpoints, accepted by the CLI) is one
/// "key=value" per line; keys are the field names below, booleans are
/// 0/1/true/false, fusion is series1 | series2 | parallel.
struct ModelConfig {
    std::size_t base_channels = 16;
    std::size_t blocks_per_stage = 2;
    std::size_t kernel_size = 3;
    std::size_t dw_kernel = 5;
    std::size_t voxel_bins = 5;
    Fusion fusion = Fusion::SeriesI;

    bool use_image_illum = true;
    bool use_event_illum = true;
    bool use_image_guide = true;
    bool use_event_guide = true;
    bool use_channel_attention = true;
    bool use_dwconv = true;
    bool use_image_branch = true;
    bool use_event_branch = true;

    // Scale each voxel grid by 1 / max|v| before it enters the network.
    bool voxel_normalize = false;
    // Add the lit image to the output projection.
    bool lit_residual = true;

    void validate() const;
    // Applies one key=value assignment; throws InvalidArgument on an unknown key.
    void set(std::string_view key, std::string_view value);
    std::string to_text() const;
    static ModelConfig from_text(std::string_view text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-pixel gain L^-1, shape [1,H,W], strictly positive.
template <class T>
struct LightUpMap {
    BasicTensor<T> data;

    static LightUpMap constant(std::size_t height, std::size_t width, T value);
};

// image [3,H,W] times lmap broadcast over channels.
template <class T>
BasicTensor<T> light_up(const BasicTensor<T>& image, const LightUpMap<T>& lmap);

template <class T>
struct EnhanceResult {
    BasicTensor<T> lit;  // image * L^-1
    BasicTensor<T> mid;  // output of the first enhancement stage, projected to RGB (undefined if skipped)
    BasicTensor<T> out;  // final enhanced image, clamped to [0,1]
    LightUpMap<T> lmap;
};

struct EnhanceOptions {
    // Replaces the estimator output with a constant map.
    std::optional<double> lmap_override;
    bool compute_mid = true;
};

/// One guided block:  y = x + attention(up(dwconv(down(x))), guide)
template <class T>
class GuidedBlock {
  public:
    GuidedBlock() = default;
    GuidedBlock(nn::ParameterList<T>& params, const std::string& prefix, const ModelConfig& config,
                bool with_guide, nn::Rng& rng);

    BasicTensor<T> operator()(const BasicTensor<T>& x, const std::optional<BasicTensor<T>>& guide) const;

  private:
    bool use_dwconv_ = true;
    bool use_attention_ = true;
    nn::Downsample<T> down_;
    nn::DepthwiseConv2d<T> dwconv_;
    nn::Upsample<T> up_;
    nn::ChannelAttention<T> attention_;
};

/// Illumination estimator, image-guided stage, event-guided stage and the
/// fusion topology around them.
template <class T>
class BasicERetinexModel {
  public:
    explicit BasicERetinexModel(const ModelConfig& config, std::uint64_t seed = 0);

    const ModelConfig& config() const noexcept { return config_; }
    nn::ParameterList<T>& parameters() noexcept { return params_; }
    const nn::ParameterList<T>& parameters() const noexcept { return params_; }

    // image [3,H,W] in [0,1]; voxels [voxel_bins,H,W].
    LightUpMap<T> estimate_illumination(const BasicTensor<T>& image, const BasicTensor<T>& voxels) const;
    EnhanceResult<T> enhance(const BasicTensor<T>& image, const BasicTensor<T>& voxels,
                             const EnhanceOptions& options = {}) const;

    void zero_parameters();

    io::Checkpoint to_checkpoint() const;
    static BasicERetinexModel from_checkpoint(const io::Checkpoint& ckpt);

    // Same config and parameter values in another precision.
    template <class U>
    BasicERetinexModel<U> cast() const {
        BasicERetinexModel<U> other(config_);
        io::apply_checkpoint(io::to_checkpoint(params_), other.parameters());
        return other;
    }

  private:
    BasicTensor<T> prepare_voxels(const BasicTensor<T>& voxels) const;
    BasicTensor<T> run_stage(const std::vector<GuidedBlock<T>>& stage, BasicTensor<T> x,
                             const std::optional<BasicTensor<T>>& guide, const char* scope) const;

    ModelConfig config_;
    nn::ParameterList<T> params_;

    nn::Conv2d<T> est_in_;
    nn::DepthwiseConv2d<T> est_dw_;
    nn::Conv2d<T> est_out_;

    nn::Conv2d<T> embed_lit_;
    nn::Conv2d<T> embed_image_;
    nn::Conv2d<T> embed_event_;
    std::vector<GuidedBlock<T>> image_stage_;
    std::vector<GuidedBlock<T>> event_stage_;
    nn::Conv2d<T> merge_;
    nn::Conv2d<T> head_;
};

using ERetinexModel = BasicERetinexModel<float>;
using ERetinexModelF64 = BasicERetinexModel<double>;

struct CostReport {
    std::size_t params = 0;
    std::uint64_t flops = 0;
    std::map<std::string, std::uint64_t> flops_by_stage;
};

// Parameter count and forward flops of one enhance() at H x W (see
// FlopCounter for the counting convention; the auxiliary mid projection is
// excluded).
CostReport count_cost(const ModelConfig& config, std::size_t height, std::size_t width);

// 2 k^2 C_in C_out H W, plus C_out H W when a bias is present.
std::uint64_t conv_flops(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t out_h,
                         std::size_t out_w, bool bias);

}  // namespace eretinex
