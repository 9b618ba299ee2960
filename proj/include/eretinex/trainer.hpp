#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eretinex/metrics.hpp"
#include "eretinex/model.hpp"
#include "eretinex/synth.hpp"

namespace eretinex::train {

struct TrainConfig {
    double lr_init = 1e-4;
    double lr_final = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 2;
    std::size_t crop = 32;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    double weight_mae = 1.0;
    double weight_perceptual = 0.2;
    // Optional MAE term on the intermediate (first-stage) image.
    double weight_mid = 0.0;
    bool hflip = true;
    // Evaluate every N steps (0: only after the last step).
    std::size_t eval_every = 0;
    std::size_t log_every = 50;
    std::string train_split = "train";
    std::string eval_split = "test";

    void validate() const;
    void set(std::string_view key, std::string_view value);
};

// Cosine annealing from lr_init (step 0) to lr_final (step == total).
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

// One bias-corrected Adam update over every parameter's accumulated grad
// (a parameter without a grad buffer counts as a zero gradient). Throws
// NonFinite naming the parameter if a gradient is not finite.
template <class T>
void adam_step(nn::ParameterList<T>& params, AdamState& state, double lr, const TrainConfig& config);

struct LoadedSample {
    std::string id;
    Tensor gt;
    Tensor low;
    Tensor voxels;
};

// Loads gt, low and voxelized events for the entries of one split. Missing
// files are reported together, by id.
std::vector<LoadedSample> load_split(const synth::Manifest& manifest, std::string_view split,
                                     const VoxelOptions& voxel_options = {});

using Predictor = std::function<Tensor(const LoadedSample&)>;

metrics::MetricReport evaluate(const Predictor& predict, const std::vector<LoadedSample>& samples);
metrics::MetricReport evaluate(const ERetinexModel& model, const std::vector<LoadedSample>& samples);

struct LogEntry {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> psnr;
    std::optional<double> ssim;

    // "step,lr,loss,psnr,ssim" with empty trailing fields when not evaluated
    std::string to_line() const;
};

struct TrainResult {
    ERetinexModel model;
    std::vector<LogEntry> log;
    metrics::MetricReport final_eval;
};

struct TrainHooks {
    // Starting parameters; the model is freshly initialised from seed otherwise.
    const io::Checkpoint* init = nullptr;
    std::ostream* log_stream = nullptr;
    metrics::PerceptualLoss<float> perceptual;  // defaults to 1 - SSIM
};

// Evaluates on config.eval_split after the last step (and every eval_every
// steps); an empty eval split falls back to the training samples.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const synth::Manifest& manifest,
                  const TrainHooks& hooks = {});

struct AblationVariant {
    std::string table;
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
};

// Rows of the illumination-input, fusion-topology and module ablations.
std::vector<AblationVariant> builtin_ablation(std::string_view which);
// Lines "table,variant,key=value;key=value"; '#' starts a comment.
std::vector<AblationVariant> parse_ablation_spec(std::string_view text);

struct AblationRow {
    std::string table;
    std::string variant;
    double psnr = 0.0;
    double ssim = 0.0;
    std::string status = "ok";
};

// Trains every variant from the same seed and evaluates it on
// config.eval_split. A failing variant is recorded and the rest continue.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& spec, const ModelConfig& base,
                                      const TrainConfig& config, const synth::Manifest& manifest,
                                      std::ostream* progress = nullptr);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace eretinex::train
