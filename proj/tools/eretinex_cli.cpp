// Command-line entry point for the enhancement pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// Failures print a human-readable line followed by
//   error code=<Code> exit=<n> message="<text>"
// on stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eretinex/error.hpp"
#include "eretinex/events.hpp"
#include "eretinex/gradcheck.hpp"
#include "eretinex/io.hpp"
#include "eretinex/metrics.hpp"
#include "eretinex/model.hpp"
#include "eretinex/synth.hpp"
#include "eretinex/trainer.hpp"

namespace fs = std::filesystem;
using namespace eretinex;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// Raised for failures that are numeric rather than data related (for
// example a failing gradient check).
struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return kExitUsage;
        case ErrorCode::NonFinite: return kExitNumeric;
        default: return kExitData;
    }
}

void report_error(std::string_view code, int exit_code, const std::string& message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\') escaped += '\\';
        escaped += c == '\n' ? ' ' : c;
    }
    std::cerr << "eretinex: " << message << '\n'
              << "error code=" << code << " exit=" << exit_code << " message=\"" << escaped << "\"\n";
}

std::pair<std::string, std::string> split_assignment(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected key=value, got: " + kv);
    return {kv.substr(0, eq), kv.substr(eq + 1)};
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void require_exists(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + path.string());
}

synth::Manifest open_manifest(const fs::path& data) {
    fs::path path = fs::is_directory(data) ? data / synth::kManifestName : data;
    require_exists(path, "manifest");
    return synth::read_manifest(path);
}

// --config accepts either key=value text or a checkpoint carrying one.
ModelConfig model_config_from(const std::string& config_path, const std::vector<std::string>& sets) {
    ModelConfig cfg;
    if (!config_path.empty()) {
        require_exists(config_path, "config");
        if (fs::path(config_path).extension() == ".erck") {
            cfg = ModelConfig::from_text(io::load_checkpoint(config_path).config_text);
        } else {
            cfg = ModelConfig::from_text(read_text(config_path));
        }
    }
    for (const auto& kv : sets) {
        auto [k, v] = split_assignment(kv);
        cfg.set(k, v);
    }
    cfg.validate();
    return cfg;
}

ERetinexModel load_model(const fs::path& ckpt) {
    require_exists(ckpt, "checkpoint");
    return ERetinexModel::from_checkpoint(io::load_checkpoint(ckpt));
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

// ---- subcommands ----------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t n = 10;
    std::size_t size = 32;
    std::uint64_t seed = 0;
    std::vector<std::string> sets;
};

int run_synth(const SynthArgs& a) {
    synth::SynthConfig cfg;
    cfg.height = cfg.width = a.size;
    cfg.seed = a.seed;
    for (const auto& kv : a.sets) {
        auto [k, v] = split_assignment(kv);
        cfg.set(k, v);
    }
    cfg.validate();
    synth::Manifest m = synth::build_dataset(cfg, a.n, a.out);
    std::cout << "wrote " << m.entries.size() << " samples (" << m.split("train").size() << " train, "
              << m.split("test").size() << " test) to " << a.out << '\n';
    return 0;
}

struct VoxelizeArgs {
    std::string events;
    std::string out;
    std::size_t bins = 7;
    std::size_t keep_first = 1;
    std::size_t keep_count = 5;
    std::size_t width = 0;
    std::size_t height = 0;
    std::optional<double> window_begin;
    std::optional<double> window_end;
};

int run_voxelize(const VoxelizeArgs& a) {
    require_exists(a.events, "event file");
    EventStream s = load_events(a.events, a.width, a.height);
    VoxelOptions opt;
    opt.bin_count = a.bins;
    opt.keep_first = a.keep_first;
    opt.keep_count = a.keep_count;
    opt.window_begin = a.window_begin;
    opt.window_end = a.window_end;
    VoxelGrid g = voxelize(s, opt);
    io::save_tensor(g.data, a.out);
    std::cout << "voxelized " << s.size() << " events into " << shape_str(g.data.dims()) << '\n';
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::string init;
    std::vector<std::string> model_sets;
    std::vector<std::string> train_sets;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    synth::Manifest manifest = open_manifest(a.data);
    std::optional<io::Checkpoint> init;
    ModelConfig mcfg;
    if (!a.init.empty()) {
        require_exists(a.init, "checkpoint");
        init = io::load_checkpoint(a.init);
        mcfg = ModelConfig::from_text(init->config_text);
        if (!a.model_sets.empty() || !a.config.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--init takes its model config from the checkpoint");
        }
    } else {
        mcfg = model_config_from(a.config, a.model_sets);
    }
    train::TrainConfig tcfg;
    for (const auto& kv : a.train_sets) {
        auto [k, v] = split_assignment(kv);
        tcfg.set(k, v);
    }
    if (a.steps) tcfg.steps = *a.steps;
    if (a.seed) tcfg.seed = *a.seed;
    tcfg.validate();

    fs::create_directories(a.out);
    std::ofstream log(fs::path(a.out) / "train_log.csv", std::ios::binary);
    if (!log) throw Error(ErrorCode::Io, "cannot write " + (fs::path(a.out) / "train_log.csv").string());
    struct Tee : std::streambuf {
        std::streambuf* a;
        std::streambuf* b;
        int overflow(int c) override {
            if (c == EOF) return 0;
            if (a->sputc(static_cast<char>(c)) == EOF) return EOF;
            if (b) b->sputc(static_cast<char>(c));
            return c;
        }
        int sync() override {
            a->pubsync();
            if (b) b->pubsync();
            return 0;
        }
    } tee;
    tee.a = log.rdbuf();
    tee.b = a.quiet ? nullptr : std::cout.rdbuf();
    std::ostream log_stream(&tee);

    train::TrainHooks hooks;
    hooks.init = init ? &*init : nullptr;
    hooks.log_stream = &log_stream;
    train::TrainResult r = train::train(mcfg, tcfg, manifest, hooks);
    log_stream.flush();

    io::save_checkpoint(r.model.to_checkpoint(), fs::path(a.out) / "model.erck");
    write_text(fs::path(a.out) / "eval.csv", r.final_eval.to_csv());
    std::cout << r.final_eval.to_table();
    return 0;
}

struct EnhanceArgs {
    std::string ckpt;
    std::string image;
    std::string events;
    std::string out;
    std::optional<double> lmap_override;
    bool dump_lmap = false;
};

int run_enhance(const EnhanceArgs& a) {
    ERetinexModel model = load_model(a.ckpt);
    require_exists(a.image, "image");
    require_exists(a.events, "event file");
    Tensor image = io::load_image(a.image);
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw Error(ErrorCode::ShapeMismatch, "image must be [3,H,W], got " + shape_str(image.dims()));
    }
    EventStream s = load_events(a.events, image.dim(2), image.dim(1));
    if (s.width() != image.dim(2) || s.height() != image.dim(1)) {
        throw Error(ErrorCode::ShapeMismatch, "event sensor " + std::to_string(s.width()) + "x" +
                                                  std::to_string(s.height()) + " does not match image " +
                                                  shape_str(image.dims()));
    }
    VoxelOptions vopt;
    vopt.keep_count = model.config().voxel_bins;
    vopt.bin_count = vopt.keep_count + 2;
    Tensor voxels = voxelize(s, vopt).data;

    NoGradGuard no_grad;
    EnhanceOptions opt;
    opt.lmap_override = a.lmap_override;
    opt.compute_mid = false;
    EnhanceResult<float> r = model.enhance(image, voxels, opt);
    io::save_image(r.out, a.out);
    if (a.dump_lmap) {
        fs::path p(a.out);
        io::save_tensor(r.lmap.data, p.parent_path() / (p.stem().string() + "_lmap.ertx"));
    }
    std::cout << "enhanced " << shape_str(image.dims()) << " -> " << a.out << '\n';
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string split = "test";
    std::string out;
};

int run_eval(const EvalArgs& a) {
    ERetinexModel model = load_model(a.ckpt);
    synth::Manifest manifest = open_manifest(a.data);
    VoxelOptions vopt;
    vopt.keep_count = model.config().voxel_bins;
    vopt.bin_count = vopt.keep_count + 2;
    auto samples = train::load_split(manifest, a.split, vopt);
    if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "split '" + a.split + "' is empty");
    metrics::MetricReport report = train::evaluate(model, samples);
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "metrics.csv", report.to_csv());
    write_text(fs::path(a.out) / "metrics.txt", report.to_table());
    std::cout << report.to_table();
    return 0;
}

struct AblateArgs {
    std::string data;
    std::string spec = "all";
    std::string out;
    std::string config;
    std::vector<std::string> model_sets;
    std::vector<std::string> train_sets;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
};

int run_ablate(const AblateArgs& a) {
    synth::Manifest manifest = open_manifest(a.data);
    ModelConfig base = model_config_from(a.config, a.model_sets);
    train::TrainConfig tcfg;
    for (const auto& kv : a.train_sets) {
        auto [k, v] = split_assignment(kv);
        tcfg.set(k, v);
    }
    if (a.steps) tcfg.steps = *a.steps;
    if (a.seed) tcfg.seed = *a.seed;
    tcfg.validate();
    std::vector<train::AblationVariant> spec =
        fs::exists(a.spec) ? train::parse_ablation_spec(read_text(a.spec)) : train::builtin_ablation(a.spec);
    auto rows = train::run_ablation(spec, base, tcfg, manifest, &std::cout);
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "ablation.csv", train::ablation_csv(rows));
    for (const auto& r : rows) {
        if (r.status != "ok") return kExitData;
    }
    return 0;
}

struct GradcheckArgs {
    std::vector<std::string> ops;
    bool full_model = false;
    bool list = false;
    std::uint64_t seed = 0;
    std::vector<std::string> model_sets;
};

int run_gradcheck(const GradcheckArgs& a) {
    if (a.list) {
        for (const auto& n : gradcheck::op_names()) std::cout << n << '\n';
        return 0;
    }
    std::vector<std::string> ops = a.ops;
    if (ops.empty() && !a.full_model) ops = gradcheck::op_names();
    bool ok = true;
    gradcheck::Options opt;
    opt.seed = a.seed;
    for (const auto& name : ops) {
        gradcheck::Report r = gradcheck::check_op(name, opt);
        std::cout << r.to_line() << '\n';
        ok = ok && r.passed();
    }
    if (a.full_model) {
        ModelConfig cfg = model_config_from("", a.model_sets);
        gradcheck::Options fm = opt;
        fm.tolerance = 1e-2;
        fm.max_per_tensor = 20;
        gradcheck::Report r = gradcheck::check_full_model(cfg, fm);
        std::cout << r.to_line() << '\n';
        ok = ok && r.passed();
    }
    if (!ok) throw NumericFailure("gradient check failed");
    return 0;
}

struct CostArgs {
    std::string config;
    std::vector<std::string> model_sets;
    std::size_t height = 256;
    std::size_t width = 256;
};

int run_cost(const CostArgs& a) {
    ModelConfig cfg = model_config_from(a.config, a.model_sets);
    CostReport r = count_cost(cfg, a.height, a.width);
    std::cout << "resolution  " << a.height << "x" << a.width << '\n'
              << "params      " << r.params << " (" << fmt("%.4f", r.params / 1e6) << " M)\n"
              << "flops       " << r.flops << " (" << fmt("%.4f", r.flops / 1e9) << " G)\n";
    for (const auto& [stage, f] : r.flops_by_stage) std::cout << "  " << stage << "  " << f << '\n';
    return 0;
}

struct InitArgs {
    std::string out;
    std::string config;
    std::vector<std::string> model_sets;
    std::uint64_t seed = 0;
    bool zero = false;
};

int run_init(const InitArgs& a) {
    ERetinexModel model(model_config_from(a.config, a.model_sets), a.seed);
    if (a.zero) model.zero_parameters();
    io::save_checkpoint(model.to_checkpoint(), a.out);
    std::cout << "wrote " << model.parameters().element_count() << " parameters to " << a.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-guided retinex low-light enhancement"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    const char* model_set_help = "Model config override key=value (repeatable)";
    const char* train_set_help = "Train config override key=value (repeatable)";

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
    synth->add_option("--out", synth_args.out, "Output directory")->required();
    synth->add_option("--n", synth_args.n, "Number of samples")->capture_default_str();
    synth->add_option("--size", synth_args.size, "Image height and width")->capture_default_str();
    synth->add_option("--seed", synth_args.seed, "Random seed")->capture_default_str();
    synth->add_option("--set", synth_args.sets, "Synth config override key=value (repeatable)");

    VoxelizeArgs vox_args;
    auto* vox = app.add_subcommand("voxelize", "Encode an event file as a voxel grid tensor");
    vox->add_option("--events", vox_args.events, "EVT1 or .csv event file")->required();
    vox->add_option("--out", vox_args.out, "Output ERTX file")->required();
    vox->add_option("--bins", vox_args.bins, "Full temporal bin count")->capture_default_str();
    vox->add_option("--keep-first", vox_args.keep_first, "First kept bin")->capture_default_str();
    vox->add_option("--keep-count", vox_args.keep_count, "Number of kept bins")->capture_default_str();
    vox->add_option("--width", vox_args.width, "Sensor width for CSV input (0: infer)");
    vox->add_option("--height", vox_args.height, "Sensor height for CSV input (0: infer)");
    vox->add_option("--window-begin", vox_args.window_begin, "Normalization window start (s)");
    vox->add_option("--window-end", vox_args.window_end, "Normalization window end (s)");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "Train a model on a dataset");
    tr->add_option("--data", train_args.data, "Dataset directory or manifest")->required();
    tr->add_option("--out", train_args.out, "Output directory")->required();
    tr->add_option("--config", train_args.config, "Model config file (key=value lines or .erck)");
    tr->add_option("--init", train_args.init, "Start from this checkpoint");
    tr->add_option("--model-set", train_args.model_sets, model_set_help);
    tr->add_option("--train-set", train_args.train_sets, train_set_help);
    tr->add_option("--steps", train_args.steps, "Training steps");
    tr->add_option("--seed", train_args.seed, "Random seed");
    tr->add_flag("--quiet", train_args.quiet, "Do not echo the log to stdout");

    EnhanceArgs enh_args;
    auto* enh = app.add_subcommand("enhance", "Enhance one low-light image");
    enh->add_option("--ckpt", enh_args.ckpt, "Model checkpoint")->required();
    enh->add_option("--image", enh_args.image, "Input image (.ppm or ERTX)")->required();
    enh->add_option("--events", enh_args.events, "EVT1 or .csv event file")->required();
    enh->add_option("--out", enh_args.out, "Output image (.ppm or ERTX)")->required();
    enh->add_option("--lmap-override", enh_args.lmap_override, "Use a constant light-up map");
    enh->add_flag("--dump-lmap", enh_args.dump_lmap, "Also write <out stem>_lmap.ertx next to --out");

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    ev->add_option("--ckpt", eval_args.ckpt, "Model checkpoint")->required();
    ev->add_option("--data", eval_args.data, "Dataset directory or manifest")->required();
    ev->add_option("--split", eval_args.split, "train | test | all")->capture_default_str();
    ev->add_option("--out", eval_args.out, "Output directory")->required();

    AblateArgs abl_args;
    auto* abl = app.add_subcommand("ablate", "Train and evaluate ablation variants");
    abl->add_option("--data", abl_args.data, "Dataset directory or manifest")->required();
    abl->add_option("--spec", abl_args.spec, "all | table2 | table3 | table4 | spec file")->capture_default_str();
    abl->add_option("--out", abl_args.out, "Output directory")->required();
    abl->add_option("--config", abl_args.config, "Base model config file");
    abl->add_option("--model-set", abl_args.model_sets, model_set_help);
    abl->add_option("--train-set", abl_args.train_sets, train_set_help);
    abl->add_option("--steps", abl_args.steps, "Training steps per variant");
    abl->add_option("--seed", abl_args.seed, "Random seed");

    GradcheckArgs gc_args;
    auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    gc->add_option("--op", gc_args.ops, "Op to check (repeatable; default all)");
    gc->add_flag("--full-model", gc_args.full_model, "Check the full model on a 3x8x8 instance");
    gc->add_flag("--list", gc_args.list, "List checkable ops");
    gc->add_option("--seed", gc_args.seed, "Random seed")->capture_default_str();
    gc->add_option("--model-set", gc_args.model_sets, model_set_help);

    CostArgs cost_args;
    auto* cost = app.add_subcommand("cost", "Parameter and flop counts");
    cost->add_option("--config", cost_args.config, "Model config file (key=value lines or .erck)");
    cost->add_option("--model-set", cost_args.model_sets, model_set_help);
    cost->add_option("--height", cost_args.height, "Input height")->capture_default_str();
    cost->add_option("--width", cost_args.width, "Input width")->capture_default_str();

    InitArgs init_args;
    auto* init = app.add_subcommand("init", "Write a freshly initialised checkpoint");
    init->add_option("--out", init_args.out, "Output checkpoint")->required();
    init->add_option("--config", init_args.config, "Model config file");
    init->add_option("--model-set", init_args.model_sets, model_set_help);
    init->add_option("--seed", init_args.seed, "Random seed")->capture_default_str();
    init->add_flag("--zero", init_args.zero, "Set every parameter to zero");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("Usage", kExitUsage, e.what());
        std::cerr << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*vox) return run_voxelize(vox_args);
        if (*tr) return run_train(train_args);
        if (*enh) return run_enhance(enh_args);
        if (*ev) return run_eval(eval_args);
        if (*abl) return run_ablate(abl_args);
        if (*gc) return run_gradcheck(gc_args);
        if (*cost) return run_cost(cost_args);
        if (*init) return run_init(init_args);
    } catch (const Error& e) {
        int code = exit_code_for(e.code());
        report_error(to_string(e.code()), code, e.what());
        return code;
    } catch (const NumericFailure& e) {
        report_error("NumericFailure", kExitNumeric, e.what());
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        report_error("Io", kExitData, e.what());
        return kExitData;
    } catch (const std::exception& e) {
        report_error("Internal", kExitData, e.what());
        return kExitData;
    }
    return kExitUsage;
}
