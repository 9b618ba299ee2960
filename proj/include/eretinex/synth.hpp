#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eretinex/events.hpp"
#include "eretinex/tensor.hpp"

namespace eretinex::synth {

/// Parameters of the synthetic low-light capture model
///   low = clamp((gt + R_noise) * (L + L_noise), 0, 1)
/// with events simulated from a flickering illumination trajectory.
struct SynthConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    double illum_min = 0.02;
    double illum_max = 0.2;
    double noise_sigma_reflectance = 0.01;
    double noise_sigma_illum = 0.005;
    double contrast_threshold = 0.15;
    std::size_t frames_per_sample = 8;
    // Frame f of the trajectory is L^(1 + flicker_strength * f / (frames - 1)).
    double flicker_strength = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    void set(std::string_view key, std::string_view value);
};

struct PairedSample {
    Tensor gt;     // [3,H,W]
    Tensor low;    // [3,H,W]
    EventStream events;
    Tensor illum;  // [1,H,W], the clean L used in synthesis
};

// Procedural scene: smooth colour gradient plus anti-aliased rectangles and
// disks. Deterministic per seed, values in [0,1].
Tensor generate_gt(const SynthConfig& config, std::uint64_t seed);

// Gaussian-blurred white noise (edge-clamped), min-max mapped to [lo, hi].
Tensor smooth_field(std::size_t height, std::size_t width, double sigma, double lo, double hi,
                    std::uint64_t seed);

struct Degraded {
    Tensor low;
    Tensor illum;
};

Degraded degrade(const Tensor& gt, const SynthConfig& config, std::uint64_t seed);
// Same perturbation model with a caller-supplied clean illumination [1,H,W].
Tensor degrade_with_illum(const Tensor& gt, const Tensor& illum, const SynthConfig& config,
                          std::uint64_t seed);

std::vector<Tensor> illumination_trajectory(const Tensor& illum, const SynthConfig& config);

// Contrast-threshold event simulation on log(max(luma * illum_t, 1e-4)),
// frames evenly spaced over [0, 1] s, crossings timestamped by linear
// interpolation. Output sorted by (t, y, x).
EventStream simulate_events(const Tensor& gt, std::span<const Tensor> trajectory,
                            const SynthConfig& config);

PairedSample make_sample(const SynthConfig& config, std::uint64_t sample_seed);

struct ManifestEntry {
    std::string id;
    std::filesystem::path gt_path;
    std::filesystem::path low_path;
    std::filesystem::path events_path;
    std::string split;  // "train" or "test"

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// One line per sample: "id,gt_path,low_path,events_path,split". Paths are
/// relative to the manifest's directory.
struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    // "all" selects every entry.
    std::vector<ManifestEntry> split(std::string_view name) const;
    std::filesystem::path resolve(const std::filesystem::path& p) const { return base_dir / p; }
};

std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text, std::filesystem::path base_dir);
Manifest read_manifest(const std::filesystem::path& path);

inline constexpr std::string_view kManifestName = "manifest.csv";

// Writes n samples (first round(0.8 n) train, remainder test) and the
// manifest under out_dir.
Manifest build_dataset(const SynthConfig& config, std::size_t n_samples,
                       const std::filesystem::path& out_dir);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream);

}  // namespace eretinex::synth
