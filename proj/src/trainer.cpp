#include "eretinex/trainer.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <ostream>
#include <random>

#include "eretinex/error.hpp"
#include "eretinex/io.hpp"
#include "eretinex/ops.hpp"

namespace eretinex::train {

namespace {

double parse_double(std::string_view key, std::string_view v) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw Error(ErrorCode::InvalidArgument, "invalid number for " + std::string(key) + ": " + std::string(v));
    }
    return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw Error(ErrorCode::InvalidArgument, "invalid integer for " + std::string(key) + ": " + std::string(v));
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Crops [C, y0:y0+ch, x0:x0+cw] and optionally mirrors horizontally.
Tensor crop_flip(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t ch, std::size_t cw, bool flip) {
    const std::size_t c = t.dim(0), w = t.dim(2);
    std::vector<float> out(c * ch * cw);
    auto v = t.values();
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < ch; ++y)
            for (std::size_t x = 0; x < cw; ++x) {
                std::size_t sx = flip ? x0 + cw - 1 - x : x0 + x;
                out[(k * ch + y) * cw + x] = v[(k * t.dim(1) + y0 + y) * w + sx];
            }
    return Tensor({c, ch, cw}, std::move(out));
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_final > 0.0 && lr_final <= lr_init)) {
        throw Error(ErrorCode::InvalidArgument, "learning rates must satisfy 0 < lr_final <= lr_init");
    }
    if (crop == 0 || crop % 2 != 0) throw Error(ErrorCode::InvalidArgument, "crop must be even and positive");
    if (steps == 0) throw Error(ErrorCode::InvalidArgument, "steps must be > 0");
    if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be > 0");
}

void TrainConfig::set(std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    if (key == "lr_init") lr_init = parse_double(key, value);
    else if (key == "lr_final") lr_final = parse_double(key, value);
    else if (key == "beta1") beta1 = parse_double(key, value);
    else if (key == "beta2") beta2 = parse_double(key, value);
    else if (key == "eps") eps = parse_double(key, value);
    else if (key == "batch_size") batch_size = parse_u64(key, value);
    else if (key == "crop") crop = parse_u64(key, value);
    else if (key == "steps") steps = parse_u64(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "weight_mae") weight_mae = parse_double(key, value);
    else if (key == "weight_perceptual") weight_perceptual = parse_double(key, value);
    else if (key == "weight_mid") weight_mid = parse_double(key, value);
    else if (key == "hflip") hflip = parse_u64(key, value) != 0;
    else if (key == "eval_every") eval_every = parse_u64(key, value);
    else if (key == "log_every") log_every = parse_u64(key, value);
    else if (key == "train_split") train_split = std::string(value);
    else if (key == "eval_split") eval_split = std::string(value);
    else throw Error(ErrorCode::InvalidArgument, "unknown train config key: " + std::string(key));
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config) {
    if (total_steps == 0 || step >= total_steps) return config.lr_final;
    if (step == 0) return config.lr_init;
    double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return config.lr_final +
           0.5 * (config.lr_init - config.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <class T>
void adam_step(nn::ParameterList<T>& params, AdamState& state, double lr, const TrainConfig& config) {
    auto& items = params.items();
    if (state.m.size() != items.size()) {
        state.m.assign(items.size(), {});
        state.v.assign(items.size(), {});
        for (std::size_t i = 0; i < items.size(); ++i) {
            state.m[i].assign(items[i].tensor.numel(), 0.0);
            state.v[i].assign(items[i].tensor.numel(), 0.0);
        }
    }
    for (const auto& p : items) {
        if (!p.tensor.has_grad()) continue;
        for (T g : p.tensor.grad()) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw Error(ErrorCode::NonFinite, "non-finite gradient in parameter " + p.name);
            }
        }
    }
    ++state.t;
    const double b1 = config.beta1, b2 = config.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i].tensor;
        auto values = p.mutable_values();
        auto grad = p.has_grad() ? p.grad() : std::span<const T>();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            double mhat = m[j] / correction1;
            double vhat = v[j] / correction2;
            values[j] = static_cast<T>(static_cast<double>(values[j]) - lr * mhat / (std::sqrt(vhat) + config.eps));
        }
    }
}

template void adam_step<float>(nn::ParameterList<float>&, AdamState&, double, const TrainConfig&);
template void adam_step<double>(nn::ParameterList<double>&, AdamState&, double, const TrainConfig&);

std::vector<LoadedSample> load_split(const synth::Manifest& manifest, std::string_view split,
                                     const VoxelOptions& voxel_options) {
    std::vector<LoadedSample> out;
    std::string missing;
    for (const auto& e : manifest.split(split)) {
        for (const auto& p : {e.gt_path, e.low_path, e.events_path}) {
            if (!std::filesystem::exists(manifest.resolve(p))) {
                missing += (missing.empty() ? "" : ", ") + e.id + " (" + p.generic_string() + ")";
            }
        }
    }
    if (!missing.empty()) throw Error(ErrorCode::Io, "missing sample files: " + missing);
    for (const auto& e : manifest.split(split)) {
        LoadedSample s;
        s.id = e.id;
        s.gt = io::load_tensor(manifest.resolve(e.gt_path));
        s.low = io::load_tensor(manifest.resolve(e.low_path));
        EventStream events = read_events(manifest.resolve(e.events_path));
        if (events.width() != s.gt.dim(2) || events.height() != s.gt.dim(1) || s.low.dims() != s.gt.dims()) {
            throw Error(ErrorCode::ShapeMismatch, "sample " + e.id + ": inconsistent image/event sizes");
        }
        s.voxels = voxelize(events, voxel_options).data;
        out.push_back(std::move(s));
    }
    return out;
}

metrics::MetricReport evaluate(const Predictor& predict, const std::vector<LoadedSample>& samples) {
    metrics::MetricReport report;
    for (const auto& s : samples) report.add(metrics::measure(s.id, predict(s), s.gt));
    report.finalize();
    return report;
}

metrics::MetricReport evaluate(const ERetinexModel& model, const std::vector<LoadedSample>& samples) {
    return evaluate(
        [&](const LoadedSample& s) {
            NoGradGuard no_grad;
            EnhanceOptions options;
            options.compute_mid = false;
            return model.enhance(s.low, s.voxels, options).out;
        },
        samples);
}

std::string LogEntry::to_line() const {
    std::string line = std::to_string(step) + "," + fmt(lr) + "," + fmt(loss) + ",";
    if (psnr) line += fmt(*psnr);
    line += ",";
    if (ssim) line += fmt(*ssim);
    return line;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const synth::Manifest& manifest,
                  const TrainHooks& hooks) {
    config.validate();
    model_config.validate();
    VoxelOptions voxel_options;
    voxel_options.keep_count = model_config.voxel_bins;
    voxel_options.bin_count = model_config.voxel_bins + 2;
    std::vector<LoadedSample> train_set = load_split(manifest, config.train_split, voxel_options);
    if (train_set.empty()) throw Error(ErrorCode::InvalidArgument, "no samples in split " + config.train_split);
    std::vector<LoadedSample> eval_set = load_split(manifest, config.eval_split, voxel_options);
    if (eval_set.empty()) eval_set = train_set;

    TrainResult result{ERetinexModel(model_config, synth::derive_seed(config.seed, 0, 100)), {}, {}};
    ERetinexModel& model = result.model;
    if (hooks.init) io::apply_checkpoint(*hooks.init, model.parameters());
    auto perceptual = hooks.perceptual ? hooks.perceptual : metrics::PerceptualLoss<float>(metrics::ssim_perceptual_loss<float>);

    std::mt19937_64 rng(synth::derive_seed(config.seed, 0, 101));
    AdamState state;
    const float batch_scale = 1.0f / static_cast<float>(config.batch_size);

    for (std::size_t step = 0; step < config.steps; ++step) {
        const double lr = lr_at(step, config.steps, config);
        model.parameters().zero_grad();
        double batch_loss = 0.0;
        std::string batch_ids;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const LoadedSample& s = train_set[std::uniform_int_distribution<std::size_t>(0, train_set.size() - 1)(rng)];
            const std::size_t h = s.gt.dim(1), w = s.gt.dim(2);
            const std::size_t ch = std::min(config.crop, h - h % 2), cw = std::min(config.crop, w - w % 2);
            std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, h - ch)(rng);
            std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, w - cw)(rng);
            bool flip = config.hflip && std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            Tensor gt = crop_flip(s.gt, y0, x0, ch, cw, flip);
            Tensor low = crop_flip(s.low, y0, x0, ch, cw, flip);
            Tensor vox = crop_flip(s.voxels, y0, x0, ch, cw, flip);
            batch_ids += (batch_ids.empty() ? "" : ",") + s.id;

            try {
                EnhanceOptions options;
                options.compute_mid = config.weight_mid > 0.0;
                EnhanceResult<float> r = model.enhance(low, vox, options);
                Tensor loss = ops::scale(ops::mae_loss(r.out, gt), static_cast<float>(config.weight_mae));
                if (config.weight_perceptual > 0.0) {
                    loss = ops::add(loss, ops::scale(perceptual(r.out, gt), static_cast<float>(config.weight_perceptual)));
                }
                if (config.weight_mid > 0.0) {
                    loss = ops::add(loss, ops::scale(ops::mae_loss(r.mid, gt), static_cast<float>(config.weight_mid)));
                }
                loss = ops::scale(loss, batch_scale);
                if (!std::isfinite(loss.item())) {
                    throw Error(ErrorCode::NonFinite, "non-finite loss at step " + std::to_string(step) +
                                                          " (batch ids: " + batch_ids + ")");
                }
                backward(loss);
                batch_loss += loss.item();
            } catch (const Error& e) {
                // op-level finite checks carry no batch context; add it
                if (e.code() != ErrorCode::NonFinite) throw;
                if (std::string_view(e.what()).find("batch ids") != std::string_view::npos) throw;
                throw Error(ErrorCode::NonFinite, std::string(e.what()) + " at step " + std::to_string(step) +
                                                      " (batch ids: " + batch_ids + ")");
            }
        }
        adam_step(model.parameters(), state, lr, config);

        LogEntry entry{step + 1, lr, batch_loss, std::nullopt, std::nullopt};
        bool last = step + 1 == config.steps;
        if (last || (config.eval_every && (step + 1) % config.eval_every == 0)) {
            metrics::MetricReport report = evaluate(model, eval_set);
            entry.psnr = report.psnr;
            entry.ssim = report.ssim;
            if (last) result.final_eval = report;
        }
        bool logged = entry.psnr || (config.log_every && (step + 1) % config.log_every == 0) || step == 0;
        if (logged) {
            result.log.push_back(entry);
            if (hooks.log_stream) *hooks.log_stream << entry.to_line() << '\n' << std::flush;
        }
    }
    return result;
}

std::vector<AblationVariant> builtin_ablation(std::string_view which) {
    std::vector<AblationVariant> out;
    auto add = [&](const char* table, const char* name, std::vector<std::pair<std::string, std::string>> o) {
        out.push_back({table, name, std::move(o)});
    };
    bool all = which == "all";
    if (all || which == "table2") {
        add("table2", "Baseline", {});
        add("table2", "W/o Image illumination", {{"use_image_illum", "0"}});
        add("table2", "W/o Event illumination", {{"use_event_illum", "0"}});
        add("table2", "W/o Both", {{"use_image_illum", "0"}, {"use_event_illum", "0"}});
    }
    if (all || which == "table3") {
        add("table3", "Series I", {{"fusion", "series1"}});
        add("table3", "Series II", {{"fusion", "series2"}});
        add("table3", "Parallel", {{"fusion", "parallel"}});
    }
    if (all || which == "table4") {
        add("table4", "Baseline", {});
        add("table4", "W/o Image", {{"use_image_branch", "0"}});
        add("table4", "W/o Event", {{"use_event_branch", "0"}});
        add("table4", "W/o Image Guide", {{"use_image_guide", "0"}});
        add("table4", "W/o Event Guide", {{"use_event_guide", "0"}});
        add("table4", "W/o Channel Attention", {{"use_channel_attention", "0"}});
        add("table4", "W/o DwConv", {{"use_dwconv", "0"}});
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "unknown built-in ablation: " + std::string(which));
    return out;
}

std::vector<AblationVariant> parse_ablation_spec(std::string_view text) {
    std::vector<AblationVariant> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::size_t offset = pos;
        std::string_view line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        if (line.empty() || line.front() == '#') continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            throw ParseError(ErrorCode::InvalidArgument, offset, "ablation spec: expected \"table,variant,overrides\"");
        }
        AblationVariant v{std::string(trim(line.substr(0, c1))), std::string(trim(line.substr(c1 + 1, c2 - c1 - 1))), {}};
        std::string_view rest = line.substr(c2 + 1);
        while (!rest.empty()) {
            std::size_t semi = rest.find(';');
            std::string_view item = trim(rest.substr(0, semi));
            rest = semi == std::string_view::npos ? std::string_view() : rest.substr(semi + 1);
            if (item.empty()) continue;
            std::size_t eq = item.find('=');
            if (eq == std::string_view::npos) {
                throw ParseError(ErrorCode::InvalidArgument, offset, "ablation spec: override without '='");
            }
            v.overrides.emplace_back(std::string(trim(item.substr(0, eq))), std::string(trim(item.substr(eq + 1))));
        }
        out.push_back(std::move(v));
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "ablation spec is empty");
    return out;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& spec, const ModelConfig& base,
                                      const TrainConfig& config, const synth::Manifest& manifest,
                                      std::ostream* progress) {
    if (spec.empty()) throw Error(ErrorCode::InvalidArgument, "ablation spec is empty");
    std::vector<AblationRow> rows;
    // Variants resolving to the same configuration train identically.
    std::map<std::string, AblationRow> done;
    for (const auto& variant : spec) {
        AblationRow row{variant.table, variant.name, std::nan(""), std::nan(""), "ok"};
        try {
            ModelConfig cfg = base;
            for (const auto& [k, v] : variant.overrides) cfg.set(k, v);
            cfg.validate();
            std::string key = cfg.to_text();
            if (auto it = done.find(key); it != done.end()) {
                row.psnr = it->second.psnr;
                row.ssim = it->second.ssim;
            } else {
                TrainResult r = train(cfg, config, manifest);
                row.psnr = r.final_eval.psnr;
                row.ssim = r.final_eval.ssim;
                done.emplace(key, row);
            }
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
        if (progress) {
            *progress << variant.table << " | " << variant.name << " | PSNR " << fmt(row.psnr) << " | SSIM "
                      << fmt(row.ssim) << " | " << row.status << '\n' << std::flush;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "table,variant,psnr,ssim,status\n";
    for (const auto& r : rows) {
        std::string status = r.status;
        for (char& c : status) {
            if (c == ',' || c == '\n') c = ';';
        }
        out += r.table + "," + r.variant + "," + fmt(r.psnr) + "," + fmt(r.ssim) + "," + status + "\n";
    }
    return out;
}

}  // namespace eretinex::train
