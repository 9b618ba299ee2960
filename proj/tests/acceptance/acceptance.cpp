// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Run with a criterion number to run only that one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eretinex/events.hpp"
#include "eretinex/gradcheck.hpp"
#include "eretinex/io.hpp"
#include "eretinex/metrics.hpp"
#include "eretinex/model.hpp"
#include "eretinex/ops.hpp"
#include "eretinex/synth.hpp"
#include "eretinex/trainer.hpp"
#include "oracles.hpp"

using namespace eretinex;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("FAILED " + what);
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape dims, std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    Tensor t(std::move(dims));
    for (auto& v : t.mutable_values()) v = d(rng);
    return t;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("eretinex_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// 1 ------------------------------------------------------------------------
Outcome voxel_oracle() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20241);
    double worst_oracle = 0, worst_mass = 0, worst_perm = 0, worst_lin = 0;
    for (int trial = 0; trial < 100; ++trial) {
        EventStream s = testing::random_stream(rng, 16, 16, 500);
        std::vector<Event> ev(s.events().begin(), s.events().end());
        auto full = accumulate_voxels(s, {});
        auto ref = testing::naive_voxels(ev, s.width(), s.height(), 7);
        VoxelGrid g = voxelize(s);
        const std::size_t plane = s.width() * s.height();
        for (std::size_t i = 0; i < full.size(); ++i) worst_oracle = std::max(worst_oracle, std::abs(full[i] - ref[i]));
        for (std::size_t i = 0; i < g.data.numel(); ++i) {
            worst_oracle = std::max(worst_oracle, std::abs(double(g.data.values()[i]) - ref[plane + i]));
        }
        if (!ev.empty()) {
            double total = 0, expect = 0;
            for (double v : full) total += v;
            for (const auto& e : ev) expect += e.p;
            worst_mass = std::max(worst_mass, std::abs(total - expect));
        }
        // any permutation through the order-free oracle, ties through voxelize
        std::vector<Event> shuffled = ev;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto ref_shuffled = testing::naive_voxels(shuffled, s.width(), s.height(), 7);
        for (std::size_t i = 0; i < g.data.numel(); ++i) {
            worst_perm = std::max(worst_perm, std::abs(double(g.data.values()[i]) - ref_shuffled[plane + i]));
        }
        std::vector<Event> tied = ev;
        for (auto& e : tied) e.t = std::floor(e.t * 8) / 8;
        std::vector<Event> tied_shuffled = tied;
        for (auto it = tied_shuffled.begin(); it != tied_shuffled.end();) {
            auto end = std::find_if(it, tied_shuffled.end(), [&](const Event& e) { return e.t != it->t; });
            std::shuffle(it, end, rng);
            it = end;
        }
        VoxelGrid ga = voxelize(EventStream(s.width(), s.height(), tied));
        VoxelGrid gb = voxelize(EventStream(s.width(), s.height(), tied_shuffled));
        for (std::size_t i = 0; i < ga.data.numel(); ++i) {
            worst_perm = std::max(worst_perm, std::abs(double(ga.data.values()[i]) - gb.data.values()[i]));
        }
        // linearity over a shared window
        EventStream s2 = testing::random_stream(rng, s.width(), s.height(), 500, true);
        std::vector<Event> both = ev;
        both.insert(both.end(), s2.events().begin(), s2.events().end());
        std::stable_sort(both.begin(), both.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
        VoxelOptions win;
        win.window_begin = 0.0;
        win.window_end = 1.0;
        VoxelGrid u = voxelize(EventStream(s.width(), s.height(), both), win);
        VoxelGrid a = voxelize(s, win), b = voxelize(s2, win);
        for (std::size_t i = 0; i < u.data.numel(); ++i) {
            worst_lin = std::max(worst_lin, std::abs(double(u.data.values()[i]) - a.data.values()[i] - b.data.values()[i]));
        }
    }
    double secs = seconds_since(t0);
    o.require(worst_oracle < 1e-6, "oracle max err " + num(worst_oracle));
    o.require(worst_mass < 1e-6, "mass max err " + num(worst_mass));
    o.require(worst_perm < 1e-6, "permutation max err " + num(worst_perm));
    o.require(worst_lin < 1e-6, "linearity max err " + num(worst_lin));
    o.require(secs < 10.0, "runtime " + num(secs) + " s");
    o.note("100 streams: oracle " + num(worst_oracle) + ", mass " + num(worst_mass) + ", perm " + num(worst_perm) +
           ", linearity " + num(worst_lin) + ", " + num(secs, "%.2f") + " s");
    return o;
}

// 2 ------------------------------------------------------------------------
Outcome endpoint_bins() {
    Outcome o;
    EventStream s(4, 4, {{1, 2, 0.0, 1}, {1, 2, 1.0, 1}});
    auto t = normalize_timestamps(s, 7);
    o.require(t == std::vector<double>{0.0, 6.0}, "t* endpoints");
    auto full = accumulate_voxels(s, {});
    std::size_t pix = 2 * 4 + 1, plane = 16;
    o.require(full[pix] == 1.0 && full[6 * plane + pix] == 1.0, "mass in bins 0 and 6");
    VoxelGrid g = voxelize(s);
    bool zero = g.data.dims() == Shape{5, 4, 4};
    for (float v : g.data.values()) zero = zero && v == 0.0f;
    o.require(zero, "kept grid all zero");
    o.note("t* = {0, 6}; kept [5,4,4] grid all zero");
    return o;
}

// 3 ------------------------------------------------------------------------
Outcome gradcheck_suite() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    double worst_op = 0;
    std::string worst_name;
    std::size_t count = 0;
    for (const auto& name : gradcheck::op_names()) {
        gradcheck::Report r = gradcheck::check_op(name);
        o.require(r.passed(), r.to_line());
        if (r.max_rel_error >= worst_op) {
            worst_op = r.max_rel_error;
            worst_name = name;
        }
        ++count;
    }
    gradcheck::Options full;
    full.tolerance = 1e-2;
    full.max_per_tensor = 20;
    double worst_full = 0;
    for (Fusion f : {Fusion::SeriesI, Fusion::SeriesII, Fusion::Parallel}) {
        ModelConfig cfg;
        cfg.fusion = f;
        gradcheck::Report r = gradcheck::check_full_model(cfg, full);
        o.require(r.passed(), r.to_line());
        worst_full = std::max(worst_full, r.max_rel_error);
    }
    double secs = seconds_since(t0);
    o.require(secs < 120.0, "runtime " + num(secs) + " s");
    o.note(std::to_string(count) + " op checks, worst " + worst_name + " " + num(worst_op, "%.2e") +
           " (< 1e-3); full model 3x8x8, 3 topologies, worst " + num(worst_full, "%.2e") + " (< 1e-2); " +
           num(secs, "%.1f") + " s");
    return o;
}

// 4 ------------------------------------------------------------------------
Outcome retinex_identities() {
    Outcome o;
    std::mt19937_64 rng(4);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor lit = light_up(img, LightUpMap<float>::constant(32, 32, 1.0f));
    o.require(std::equal(lit.values().begin(), lit.values().end(), img.values().begin()), "light_up identity");

    bool fixed_point = true;
    for (Fusion f : {Fusion::SeriesI, Fusion::SeriesII, Fusion::Parallel}) {
        ModelConfig cfg;
        cfg.fusion = f;
        ERetinexModel model(cfg, 3);
        model.zero_parameters();
        Tensor vox = random_tensor({5, 32, 32}, rng, -2.0f, 2.0f);
        EnhanceOptions opt;
        opt.lmap_override = 1.0;
        Tensor out = model.enhance(img, vox, opt).out;
        fixed_point = fixed_point && std::equal(out.values().begin(), out.values().end(), img.values().begin());
    }
    o.require(fixed_point, "zero-parameter fixed point");

    synth::SynthConfig cfg;
    cfg.noise_sigma_reflectance = cfg.noise_sigma_illum = 0.0;
    double worst = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        Tensor gt = synth::generate_gt(cfg, s);
        synth::Degraded d = synth::degrade(gt, cfg, s);
        for (std::size_t i = 0; i < gt.numel(); ++i) {
            double expect = double(gt.values()[i]) * d.illum.values()[i % (32 * 32)];
            worst = std::max(worst, std::abs(d.low.values()[i] - expect));
        }
    }
    o.require(worst < 1e-6, "noiseless degrade err " + num(worst));
    o.note("light_up(1) bit-exact; zero model + lmap 1 returns input bit-exact (3 topologies); |low - gt*L| max " +
           num(worst));
    return o;
}

// 5 ------------------------------------------------------------------------
Outcome metric_oracles() {
    Outcome o;
    double p = metrics::psnr(Tensor({3, 16, 16}, 0.0f), Tensor({3, 16, 16}, 0.5f));
    o.require(std::abs(p - 6.0206) < 1e-3, "PSNR(0, 0.5) = " + num(p));

    // errors are multiples of 2^-10 around 0.5, so k * e is exact in f32
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> q(-16, 16);
    Tensor target({3, 16, 16}, 0.5f), pred(target.dims());
    for (auto& v : pred.mutable_values()) v = 0.5f + q(rng) / 1024.0f;
    double base = metrics::psnr(pred, target);
    double worst_shift = 0;
    for (float k : {2.0f, 4.0f}) {
        Tensor scaled(target.dims());
        for (std::size_t i = 0; i < pred.numel(); ++i) scaled.mutable_values()[i] = 0.5f + k * (pred.values()[i] - 0.5f);
        double shift = metrics::psnr(scaled, target) - base;
        worst_shift = std::max(worst_shift, std::abs(shift + 20 * std::log10(double(k))));
    }
    o.require(worst_shift < 1e-6, "PSNR scaling err " + num(worst_shift));

    Tensor a = random_tensor({3, 32, 32}, rng, 0.0f, 1.0f), b = random_tensor({3, 32, 32}, rng, 0.0f, 1.0f);
    double same = metrics::ssim(a, a);
    double asym = std::abs(metrics::ssim(a, b) - metrics::ssim(b, a));
    o.require(std::abs(same - 1.0) <= 1e-9, "SSIM(a, a) = " + num(same, "%.12f"));
    o.require(asym < 1e-7, "SSIM asymmetry " + num(asym));
    o.note("PSNR(0,0.5) " + num(p, "%.6f") + " dB; scaling err " + num(worst_shift) + " dB; SSIM(a,a) " +
           num(same, "%.12f") + "; asymmetry " + num(asym));
    return o;
}

// 6 ------------------------------------------------------------------------
Outcome lr_schedule() {
    Outcome o;
    train::TrainConfig cfg;
    const std::size_t total = 1000;
    double first = train::lr_at(0, total, cfg), last = train::lr_at(total, total, cfg);
    o.require(first == 1e-4, "lr_at(0) = " + num(first, "%.17g"));
    o.require(last == 1e-6, "lr_at(T) = " + num(last, "%.17g"));
    bool monotone = true;
    double prev = first;
    for (std::size_t s = 1; s <= total; ++s) {
        double lr = train::lr_at(s, total, cfg);
        monotone = monotone && lr <= prev;
        prev = lr;
    }
    o.require(monotone, "monotone non-increasing");
    o.note("lr_at(0) = 1e-4, lr_at(1000) = 1e-6 exactly; non-increasing over 1000 steps");
    return o;
}

// 7 ------------------------------------------------------------------------
Outcome toy_overfit() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    fs::path dir = scratch("overfit");
    synth::SynthConfig scfg;
    scfg.seed = 1;
    synth::Manifest m = synth::build_dataset(scfg, 4, dir);

    train::TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 2;
    cfg.crop = 32;
    // toy-scale peak learning rate; the cosine floor stays at 1e-6
    cfg.lr_init = 1e-3;
    cfg.train_split = "all";
    cfg.eval_split = "all";
    cfg.log_every = 0;
    ModelConfig mcfg;

    auto held_in = train::load_split(m, "all");
    ERetinexModel init(mcfg, synth::derive_seed(cfg.seed, 0, 100));
    double psnr0 = train::evaluate(init, held_in).psnr;
    train::TrainResult r = train::train(mcfg, cfg, m);
    double psnr1 = r.final_eval.psnr;
    double secs = seconds_since(t0);
    o.require(psnr1 >= 25.0, "held-in PSNR " + num(psnr1, "%.3f"));
    o.require(psnr1 - psnr0 >= 5.0, "gain over init " + num(psnr1 - psnr0, "%.3f"));
    o.require(secs < 600.0, "runtime " + num(secs) + " s");
    o.note("4 samples 32x32, 2000 steps, batch 2, lr 1e-3 -> 1e-6: held-in PSNR " + num(psnr1, "%.2f") +
           " dB (init " + num(psnr0, "%.2f") + " dB), SSIM " + num(r.final_eval.ssim, "%.4f") + ", " +
           num(secs, "%.0f") + " s");
    fs::remove_all(dir);
    return o;
}

// 8 ------------------------------------------------------------------------
Outcome ablation_harness() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    fs::path dir = scratch("ablation");
    synth::SynthConfig scfg;
    scfg.seed = 2;
    synth::Manifest m = synth::build_dataset(scfg, 5, dir);
    train::TrainConfig cfg;
    cfg.steps = 100;
    cfg.lr_init = 1e-3;
    cfg.log_every = 0;
    ModelConfig base;
    base.base_channels = 8;

    auto spec = train::builtin_ablation("all");
    auto rows = train::run_ablation(spec, base, cfg, m);
    std::size_t t2 = 0, t3 = 0, t4 = 0;
    bool finite = true;
    for (const auto& r : rows) {
        t2 += r.table == "table2";
        t3 += r.table == "table3";
        t4 += r.table == "table4";
        bool ok = r.status == "ok" && std::isfinite(r.psnr) && std::isfinite(r.ssim);
        if (!ok) o.require(false, r.table + "/" + r.variant + " " + r.status);
        finite = finite && ok;
    }
    o.require(t2 == 4 && t3 == 3 && t4 == 7, "row counts " + std::to_string(t2) + "/" + std::to_string(t3) + "/" +
                                                 std::to_string(t4));
    std::string csv = train::ablation_csv(rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    o.require(line == "table,variant,psnr,ssim,status", "CSV header");
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        o.require(std::count(line.begin(), line.end(), ',') == 4, "CSV row: " + line);
        ++lines;
    }
    o.require(lines == 14, "CSV rows " + std::to_string(lines));
    o.note("14 rows (4 + 3 + 7), all finite; 100 steps per variant; " + num(seconds_since(t0), "%.0f") + " s");
    std::printf("%s", csv.c_str());
    fs::remove_all(dir);
    return o;
}

// 9 ------------------------------------------------------------------------
Outcome format_round_trips() {
    Outcome o;
    fs::path dir = scratch("formats");
    std::mt19937_64 rng(9);
    auto bytes_of = [](const fs::path& p) {
        std::vector<std::uint8_t> b(fs::file_size(p));
        std::FILE* f = std::fopen(p.c_str(), "rb");
        if (f) {
            std::size_t got = std::fread(b.data(), 1, b.size(), f);
            b.resize(got);
            std::fclose(f);
        }
        return b;
    };
    int evt = 0, ertx = 0, erck = 0, ppm = 0;
    for (int i = 0; i < 20; ++i) {
        EventStream s = testing::random_stream(rng, 64, 64, 2000);
        write_events(s, dir / "a.evt");
        write_events(read_events(dir / "a.evt"), dir / "b.evt");
        evt += bytes_of(dir / "a.evt") == bytes_of(dir / "b.evt");

        std::uniform_int_distribution<std::size_t> dd(1, 6), rd(0, 4);
        Shape dims(rd(rng));
        for (auto& d : dims) d = dd(rng);
        io::save_tensor(random_tensor(dims, rng, -1e3f, 1e3f), dir / "a.ertx");
        io::save_tensor(io::load_tensor(dir / "a.ertx"), dir / "b.ertx");
        ertx += bytes_of(dir / "a.ertx") == bytes_of(dir / "b.ertx");

        ModelConfig mc;
        mc.base_channels = 4 + i % 5;
        mc.fusion = static_cast<Fusion>(i % 3);
        io::save_checkpoint(ERetinexModel(mc, i).to_checkpoint(), dir / "a.erck");
        io::save_checkpoint(io::load_checkpoint(dir / "a.erck"), dir / "b.erck");
        erck += bytes_of(dir / "a.erck") == bytes_of(dir / "b.erck");

        io::save_ppm(random_tensor({3, dd(rng) * 3, dd(rng) * 5}, rng, 0.0f, 1.0f), dir / "a.ppm");
        io::save_ppm(io::load_ppm(dir / "a.ppm"), dir / "b.ppm");
        ppm += bytes_of(dir / "a.ppm") == bytes_of(dir / "b.ppm");
    }
    o.require(evt == 20, "EVT1 " + std::to_string(evt) + "/20");
    o.require(ertx == 20, "ERTX " + std::to_string(ertx) + "/20");
    o.require(erck == 20, "ERCK " + std::to_string(erck) + "/20");
    o.require(ppm == 20, "PPM " + std::to_string(ppm) + "/20");
    o.note("20 random instances each of EVT1, ERTX, ERCK, PPM byte-identical after write-read-write");
    fs::remove_all(dir);
    return o;
}

// 10 -----------------------------------------------------------------------
Outcome cost_counter() {
    Outcome o;
    bool params_ok = true;
    for (Fusion f : {Fusion::SeriesI, Fusion::SeriesII, Fusion::Parallel}) {
        ModelConfig cfg;
        cfg.fusion = f;
        CostReport r = count_cost(cfg, 64, 64);
        std::size_t walk = 0;
        for (const auto& e : ERetinexModel(cfg).to_checkpoint().entries) {
            std::size_t n = 1;
            for (auto d : e.tensor.dims()) n *= d;
            walk += n;
        }
        params_ok = params_ok && r.params == walk;
    }
    o.require(params_ok, "params vs checkpoint walk");

    bool flops_ok = true;
    const std::size_t cases[][5] = {{3, 8, 1, 16, 16}, {16, 16, 3, 32, 32}, {9, 16, 5, 7, 11}};
    for (const auto& c : cases) {
        std::size_t ci = c[0], co = c[1], k = c[2], h = c[3], w = c[4];
        nn::ParameterList<float> params;
        nn::Rng rng(1);
        nn::Conv2d<float> conv(params, "c", ci, co, k, 1, rng);
        FlopCounter counter;
        NoGradGuard ng;
        conv(Tensor({ci, h, w}, 0.25f));
        std::uint64_t closed = 2ull * k * k * ci * co * h * w + h * w * co;
        flops_ok = flops_ok && counter.total() == closed;
    }
    o.require(flops_ok, "conv flops closed form");
    ModelConfig def;
    CostReport r = count_cost(def, 256, 256);
    o.note("params == checkpoint walk (3 topologies); conv flops == 2k^2 CinCoutHW + HWCout; default config at 256x256: " +
           std::to_string(r.params) + " params, " + num(r.flops / 1e9, "%.3f") + " GFLOPs");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "voxelizer oracle equivalence", voxel_oracle},
        {2, "endpoint-bin property", endpoint_bins},
        {3, "gradcheck suite", gradcheck_suite},
        {4, "retinex identities", retinex_identities},
        {5, "metric oracles", metric_oracles},
        {6, "lr schedule endpoints", lr_schedule},
        {7, "toy overfit", toy_overfit},
        {8, "ablation harness", ablation_harness},
        {9, "format round-trips", format_round_trips},
        {10, "cost counter", cost_counter},
    };
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

    int failed = 0;
    std::vector<std::string> lines;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        char head[96];
        std::snprintf(head, sizeof head, "%s [%d] %s: ", o.pass ? "PASS" : "FAIL", c.id, c.name);
        lines.push_back(head + o.detail);
        std::printf("%s\n", lines.back().c_str());
        std::fflush(stdout);
    }
    std::printf("\nsummary\n");
    for (const auto& l : lines) std::printf("%s\n", l.c_str());
    std::printf("%d of %zu criteria failed\n", failed, lines.size());
    return failed == 0 ? 0 : 1;
}
