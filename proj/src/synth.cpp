#include "eretinex/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "byte_io.hpp"
#include "eretinex/error.hpp"
#include "eretinex/io.hpp"

namespace eretinex::synth {

namespace {

using Rng = std::mt19937_64;

constexpr double kLogFloor = 1e-4;

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

// Separable Gaussian blur with edge clamping, in place.
void blur(std::vector<double>& field, std::size_t h, std::size_t w, double sigma) {
    if (sigma <= 0.0) return;
    auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        taps[static_cast<std::size_t>(i + radius)] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
        total += taps[static_cast<std::size_t>(i + radius)];
    }
    for (auto& t : taps) t /= total;
    auto clampi = [](std::ptrdiff_t v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    std::vector<double> tmp(field.size());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
                acc += taps[static_cast<std::size_t>(i + radius)] *
                       field[y * w + clampi(static_cast<std::ptrdiff_t>(x) + i, w)];
            }
            tmp[y * w + x] = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
                acc += taps[static_cast<std::size_t>(i + radius)] *
                       tmp[clampi(static_cast<std::ptrdiff_t>(y) + i, h) * w + x];
            }
            field[y * w + x] = acc;
        }
}

std::vector<double> gaussian_noise(std::size_t n, double sigma, Rng& rng) {
    std::vector<double> out(n, 0.0);
    if (sigma <= 0.0) return out;
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : out) v = dist(rng);
    return out;
}

double blur_sigma(std::size_t height) { return std::max(1.0, static_cast<double>(height) / 4.0); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream) {
    // splitmix64 finalizer over a mixed key
    std::uint64_t z = base * 0x9E3779B97F4A7C15ull + index * 0xBF58476D1CE4E5B9ull + stream * 0x94D049BB133111EBull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void SynthConfig::validate() const {
    if (height == 0 || width == 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (!(illum_min > 0.0 && illum_min <= illum_max && illum_max <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "illumination range must satisfy 0 < min <= max <= 1");
    }
    if (noise_sigma_reflectance < 0.0 || noise_sigma_illum < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "noise sigmas must be non-negative");
    }
    if (!(contrast_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "contrast threshold must be positive");
    if (frames_per_sample < 2) throw Error(ErrorCode::InvalidArgument, "frames_per_sample must be >= 2");
}

void SynthConfig::set(std::string_view key, std::string_view value) {
    if (key == "height") height = parse_u64(key, value);
    else if (key == "width") width = parse_u64(key, value);
    else if (key == "illum_min") illum_min = parse_double(key, value);
    else if (key == "illum_max") illum_max = parse_double(key, value);
    else if (key == "noise_sigma_reflectance") noise_sigma_reflectance = parse_double(key, value);
    else if (key == "noise_sigma_illum") noise_sigma_illum = parse_double(key, value);
    else if (key == "contrast_threshold") contrast_threshold = parse_double(key, value);
    else if (key == "frames_per_sample") frames_per_sample = parse_u64(key, value);
    else if (key == "flicker_strength") flicker_strength = parse_double(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else throw Error(ErrorCode::InvalidArgument, "unknown synth config key: " + std::string(key));
}

Tensor generate_gt(const SynthConfig& config, std::uint64_t seed) {
    const std::size_t h = config.height, w = config.width, plane = h * w;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> img(3 * plane);

    double corners[4][3];
    for (auto& corner : corners)
        for (double& c : corner) c = 0.15 + 0.7 * unit(rng);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double u = w > 1 ? double(x) / double(w - 1) : 0.0;
            double v = h > 1 ? double(y) / double(h - 1) : 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                img[c * plane + y * w + x] = (1 - u) * (1 - v) * corners[0][c] + u * (1 - v) * corners[1][c] +
                                             (1 - u) * v * corners[2][c] + u * v * corners[3][c];
            }
        }

    std::uniform_int_distribution<int> shape_count(3, 6);
    const int shapes = shape_count(rng);
    constexpr int kSuper = 4;
    for (int s = 0; s < shapes; ++s) {
        bool disk = unit(rng) < 0.5;
        double cx = unit(rng) * double(w), cy = unit(rng) * double(h);
        double rx = (0.1 + 0.25 * unit(rng)) * double(w), ry = (0.1 + 0.25 * unit(rng)) * double(h);
        double color[3] = {unit(rng), unit(rng), unit(rng)};
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                int inside = 0;
                for (int sy = 0; sy < kSuper; ++sy)
                    for (int sx = 0; sx < kSuper; ++sx) {
                        double px = double(x) + (sx + 0.5) / kSuper, py = double(y) + (sy + 0.5) / kSuper;
                        double dx = (px - cx) / rx, dy = (py - cy) / ry;
                        bool hit = disk ? (dx * dx + dy * dy <= 1.0) : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
                        inside += hit;
                    }
                if (!inside) continue;
                double alpha = double(inside) / (kSuper * kSuper);
                for (std::size_t c = 0; c < 3; ++c) {
                    double& px = img[c * plane + y * w + x];
                    px = (1 - alpha) * px + alpha * color[c];
                }
            }
    }
    std::vector<float> out(img.size());
    std::transform(img.begin(), img.end(), out.begin(),
                   [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); });
    return Tensor({3, h, w}, std::move(out));
}

Tensor smooth_field(std::size_t height, std::size_t width, double sigma, double lo, double hi,
                    std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> field = gaussian_noise(height * width, 1.0, rng);
    blur(field, height, width, sigma);
    auto [mn, mx] = std::minmax_element(field.begin(), field.end());
    double low = *mn, span = *mx - *mn;
    std::vector<float> out(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        double u = span > 0.0 ? (field[i] - low) / span : 0.5;
        out[i] = static_cast<float>(lo + (hi - lo) * u);
    }
    return Tensor({1, height, width}, std::move(out));
}

Degraded degrade(const Tensor& gt, const SynthConfig& config, std::uint64_t seed) {
    Tensor illum = smooth_field(gt.dim(1), gt.dim(2), blur_sigma(gt.dim(1)), config.illum_min, config.illum_max,
                                derive_seed(seed, 0, 1));
    Tensor low = degrade_with_illum(gt, illum, config, seed);
    return {low, illum};
}

Tensor degrade_with_illum(const Tensor& gt, const Tensor& illum, const SynthConfig& config,
                          std::uint64_t seed) {
    if (gt.rank() != 3 || gt.dim(0) != 3 || illum.dims() != Shape{1, gt.dim(1), gt.dim(2)}) {
        throw Error(ErrorCode::ShapeMismatch,
                    "degrade: gt " + shape_str(gt.dims()) + " vs illumination " + shape_str(illum.dims()));
    }
    const std::size_t h = gt.dim(1), w = gt.dim(2), plane = h * w;
    Rng rng(derive_seed(seed, 0, 2));
    std::vector<double> r_noise = gaussian_noise(3 * plane, config.noise_sigma_reflectance, rng);
    std::vector<double> l_noise(plane, 0.0);
    if (config.noise_sigma_illum > 0.0) {
        l_noise = gaussian_noise(plane, 1.0, rng);
        blur(l_noise, h, w, blur_sigma(h));
        double mean = 0.0, var = 0.0;
        for (double v : l_noise) mean += v;
        mean /= double(plane);
        for (double v : l_noise) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / double(plane));
        for (double& v : l_noise) v = sd > 0.0 ? (v - mean) / sd * config.noise_sigma_illum : 0.0;
    }
    auto g = gt.values();
    auto l = illum.values();
    std::vector<float> low(3 * plane);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            float reflect = g[c * plane + i] + static_cast<float>(r_noise[c * plane + i]);
            float light = l[i] + static_cast<float>(l_noise[i]);
            low[c * plane + i] = std::clamp(reflect * light, 0.0f, 1.0f);
        }
    return Tensor({3, h, w}, std::move(low));
}

std::vector<Tensor> illumination_trajectory(const Tensor& illum, const SynthConfig& config) {
    config.validate();
    std::vector<Tensor> frames;
    const std::size_t n = config.frames_per_sample;
    for (std::size_t f = 0; f < n; ++f) {
        double exponent = 1.0 + config.flicker_strength * double(f) / double(n - 1);
        std::vector<float> v(illum.numel());
        auto src = illum.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(std::pow(double(src[i]), exponent));
        frames.emplace_back(illum.dims(), std::move(v));
    }
    return frames;
}

EventStream simulate_events(const Tensor& gt, std::span<const Tensor> trajectory, const SynthConfig& config) {
    if (trajectory.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "illumination trajectory too short: need >= 2 frames");
    }
    if (!(config.contrast_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "contrast threshold must be positive");
    if (gt.rank() != 3 || gt.dim(0) != 3) throw Error(ErrorCode::ShapeMismatch, "gt must be [3,H,W]");
    const std::size_t h = gt.dim(1), w = gt.dim(2), plane = h * w;
    for (const auto& frame : trajectory) {
        if (frame.dims() != Shape{1, h, w}) {
            throw Error(ErrorCode::ShapeMismatch, "trajectory frame " + shape_str(frame.dims()) + " vs gt " + shape_str(gt.dims()));
        }
    }
    auto g = gt.values();
    std::vector<double> luma(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        luma[i] = 0.299 * g[i] + 0.587 * g[plane + i] + 0.114 * g[2 * plane + i];
    }
    const double c = config.contrast_threshold;
    const double span = double(trajectory.size() - 1);
    std::vector<Event> events;
    std::vector<double> prev(plane), base(plane);
    std::vector<long> level(plane, 0);
    for (std::size_t i = 0; i < plane; ++i) {
        prev[i] = std::log(std::max(luma[i] * double(trajectory[0].values()[i]), kLogFloor));
        base[i] = prev[i];
    }
    for (std::size_t f = 1; f < trajectory.size(); ++f) {
        auto frame = trajectory[f].values();
        double t0 = double(f - 1) / span, t1 = double(f) / span;
        for (std::size_t i = 0; i < plane; ++i) {
            double a = prev[i];
            double b = std::log(std::max(luma[i] * double(frame[i]), kLogFloor));
            auto emit = [&](double crossing, std::int8_t p) {
                double t = t0 + (crossing - a) / (b - a) * (t1 - t0);
                events.push_back({static_cast<std::uint16_t>(i % w), static_cast<std::uint16_t>(i / w),
                                  std::clamp(t, t0, t1), p});
            };
            if (b > a) {
                while (b >= base[i] + double(level[i] + 1) * c) {
                    ++level[i];
                    emit(base[i] + double(level[i]) * c, 1);
                }
            } else if (b < a) {
                while (b <= base[i] + double(level[i] - 1) * c) {
                    --level[i];
                    emit(base[i] + double(level[i]) * c, -1);
                }
            }
            prev[i] = b;
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& l, const Event& r) {
        if (l.t != r.t) return l.t < r.t;
        if (l.y != r.y) return l.y < r.y;
        return l.x < r.x;
    });
    return EventStream(w, h, std::move(events));
}

PairedSample make_sample(const SynthConfig& config, std::uint64_t sample_seed) {
    config.validate();
    PairedSample s;
    s.gt = generate_gt(config, derive_seed(sample_seed, 0, 10));
    Degraded d = degrade(s.gt, config, derive_seed(sample_seed, 0, 11));
    s.low = d.low;
    s.illum = d.illum;
    auto trajectory = illumination_trajectory(s.illum, config);
    s.events = simulate_events(s.gt, trajectory, config);
    return s;
}

std::vector<ManifestEntry> Manifest::split(std::string_view name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (name == "all" || e.split == name) out.push_back(e);
    }
    return out;
}

std::string format_manifest(const Manifest& manifest) {
    std::string out;
    for (const auto& e : manifest.entries) {
        out += e.id + "," + e.gt_path.generic_string() + "," + e.low_path.generic_string() + "," +
               e.events_path.generic_string() + "," + e.split + "\n";
    }
    return out;
}

Manifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
    Manifest m;
    m.base_dir = std::move(base_dir);
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        std::size_t offset = pos;
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 5) {
            throw ParseError(ErrorCode::InvalidArgument, offset,
                             "manifest line " + std::to_string(line_no) + ": expected 5 fields");
        }
        if (fields[4] != "train" && fields[4] != "test") {
            throw ParseError(ErrorCode::InvalidArgument, offset,
                             "manifest line " + std::to_string(line_no) + ": split must be train or test");
        }
        m.entries.push_back({fields[0], fields[1], fields[2], fields[3], fields[4]});
    }
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path);
    return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                          path.parent_path());
}

Manifest build_dataset(const SynthConfig& config, std::size_t n_samples, const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    Manifest m;
    m.base_dir = out_dir;
    const std::size_t n_train = (n_samples * 8 + 5) / 10;
    for (std::size_t i = 0; i < n_samples; ++i) {
        std::ostringstream id;
        id << 's' << std::setw(4) << std::setfill('0') << i;
        PairedSample s = make_sample(config, derive_seed(config.seed, i, 0));
        ManifestEntry e{id.str(), "gt_" + id.str() + ".ertx", "low_" + id.str() + ".ertx",
                        "events_" + id.str() + ".evt", i < n_train ? "train" : "test"};
        io::save_tensor(s.gt, out_dir / e.gt_path);
        io::save_tensor(s.low, out_dir / e.low_path);
        write_events(s.events, out_dir / e.events_path);
        m.entries.push_back(std::move(e));
    }
    std::string text = format_manifest(m);
    detail::write_file(out_dir / kManifestName, std::vector<std::uint8_t>(text.begin(), text.end()));
    return m;
}

}  // namespace eretinex::synth
