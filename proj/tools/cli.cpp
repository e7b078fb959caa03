#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "kgcnn/decompose.hpp"
#include "kgcnn/kernelspace.hpp"
#include "kgcnn/metrics.hpp"
#include "kgcnn/pipeline.hpp"
#include "kgcnn/rainsim.hpp"

namespace kgcnn::cli {

namespace fs = std::filesystem;
using img::ImageTensor;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void setup_logging() {
    auto logger = std::make_shared<spdlog::logger>(
        "kgcnn", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    spdlog::cfg::load_env_levels();
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error(fmt::format("{}: not a directory", dir.string()));
    }
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (entry.is_regular_file() && ext == ".png") {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ImageTensor> load_all(const std::vector<fs::path>& paths) {
    std::vector<ImageTensor> images;
    images.reserve(paths.size());
    for (const auto& p : paths) {
        images.push_back(pipeline::to_rgb(img::load_png(p)));
    }
    return images;
}

void ensure_dir(const fs::path& dir) {
    if (!dir.empty()) {
        fs::create_directories(dir);
    }
}

void ensure_parent(const fs::path& file) { ensure_dir(file.parent_path()); }

void log_config(const CLI::App& sub) {
    spdlog::info("{} configuration:", sub.get_name());
    std::istringstream lines(sub.config_to_str(true, false));
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) {
            spdlog::info("  {}", line);
        }
    }
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
    std::string input;
    std::string output;
    std::uint64_t seed = 1;
};

void run_simulate(const SimulateArgs& a) {
    const auto files = list_pngs(a.input);
    if (files.empty()) {
        throw std::runtime_error(fmt::format("{}: no PNG images", a.input));
    }
    ensure_dir(a.output);
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto background = pipeline::to_rgb(img::load_png(files[i]));
        auto rng = make_rng(a.seed, Stream::params, i);
        const auto params = rain::sample_rain_params(rng);
        const auto synthetic = rain::synthesize_rainy(background, params);
        const auto stem = files[i].stem().string();
        const fs::path out(a.output);
        img::save_png(synthetic.rainy, out / (stem + "_rainy.png"));
        img::save_png(synthetic.streaks, out / (stem + "_streaks.png"));
        std::ofstream sidecar(out / (stem + "_params.txt"), std::ios::trunc);
        sidecar << fmt::format("theta = {:.17g}\nlength = {:.17g}\nsnr = {:.17g}\nsigma = {:.17g}\n"
                               "seed = {}\n",
                               params.theta, params.length, params.mask_snr, params.mask_sigma,
                               params.seed);
        if (!sidecar) {
            throw std::runtime_error(fmt::format("{}: cannot write parameter record", stem));
        }
        spdlog::info("{}: theta {:.2f} length {:.2f}", stem, params.theta, params.length);
    }
}

// --- decompose ------------------------------------------------------------

struct DecomposeArgs {
    std::string input;
    std::string out;
    int radius = 15;
    double eps = 1.0;
};

void run_decompose(const DecomposeArgs& a) {
    const fs::path in(a.input);
    const auto image = img::load_png(in);
    const auto parts = decomp::split_texture(image, {a.radius, a.eps});
    const fs::path dir = a.out.empty() ? in.parent_path() : fs::path(a.out);
    ensure_dir(dir);
    auto shown = parts.texture;
    for (double& v : shown.data()) {
        v = (v + 1.0) / 2.0;
    }
    const auto stem = in.stem().string();
    img::save_png(parts.structure, dir / (stem + "_structure.png"));
    img::save_png(shown, dir / (stem + "_texture.png"));
}

// --- fit-pca --------------------------------------------------------------

struct FitPcaArgs {
    std::string out;
    int theta_steps = 91;
    int length_steps = 16;
    double energy = 0.99;
};

void run_fit_pca(const FitPcaArgs& a) {
    const auto family = kspace::sample_kernel_family(a.theta_steps, a.length_steps);
    const auto basis = kspace::fit_pca(family, a.energy);
    spdlog::info("{} kernels, retained dimension {} ({:.4f} of energy)", family.size(),
                 basis.dimension, basis.energy_kept);
    ensure_parent(a.out);
    kspace::save_basis(basis, a.out);
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    std::string net = "derain";
    std::string mode = "full";
    int epochs = 50;
    int batch = 8;
    double lr = 0.01;
    std::uint64_t seed = 1;
    int depth = pipeline::kDefaultDepth;
    int filters = pipeline::kDefaultFilters;
    int patches = 500;
    std::string data;
    std::string pca;
    std::string out;
    std::string loss_csv;
};

pipeline::AblationMode parse_mode_arg(const std::string& text) {
    try {
        return pipeline::parse_mode(text);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

pipeline::TrainConfig to_config(const TrainArgs& a) {
    pipeline::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.learning_rate = a.lr;
    cfg.seed = a.seed;
    cfg.patches = a.patches;
    cfg.mode = parse_mode_arg(a.mode);
    cfg.depth = a.depth;
    cfg.filters = a.filters;
    return cfg;
}

void write_loss_csv(const std::vector<double>& history, const fs::path& path) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::trunc);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        out << fmt::format("{},{:.17g}\n", e, history[e]);
    }
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot write", path.string()));
    }
}

void run_train(const TrainArgs& a) {
    const auto cfg = to_config(a);
    const auto pca = kspace::load_basis(a.pca);
    const auto clean = load_all(list_pngs(a.data));
    spdlog::info("building {} training patches from {} images (seed {})", cfg.patches,
                 clean.size(), cfg.seed);
    const auto data = pipeline::build_training_set(clean, cfg.patches, cfg.seed, pca);
    auto on_epoch = [](int epoch, double loss) { spdlog::info("epoch {} loss {:.6g}", epoch, loss); };
    pipeline::TrainResult result;
    if (a.net == "param") {
        result = pipeline::train_param_net(data, cfg, on_epoch);
    } else {
        result = pipeline::train_derain_net(data, pca.dimension, cfg, on_epoch);
    }
    spdlog::info("loss {:.6g} -> {:.6g}", result.loss_history.front(), result.loss_history.back());
    ensure_parent(a.out);
    nn::save_checkpoint(result.model, a.out);
    if (!a.loss_csv.empty()) {
        write_loss_csv(result.loss_history, a.loss_csv);
    }
}

// --- derain ---------------------------------------------------------------

struct DerainArgs {
    std::string param;
    std::string derain;
    std::string pca;
    std::string input;
    std::string output;
    std::string dump_streaks;
    std::string mode;
};

void run_derain(const DerainArgs& a) {
    const auto param = nn::load_checkpoint(a.param);
    const auto derain = nn::load_checkpoint(a.derain);
    const auto pca = kspace::load_basis(a.pca);
    std::string mode_text = a.mode;
    if (mode_text.empty()) {
        const auto it = derain.metadata.find("mode");
        mode_text = it != derain.metadata.end() ? it->second : "full";
    }
    const auto mode = parse_mode_arg(mode_text);
    spdlog::info("derain mode {}", pipeline::to_string(mode));
    const auto rainy = img::load_png(a.input);
    const auto result = pipeline::derain_image(rainy, param, derain, pca, mode);
    ensure_parent(a.output);
    img::save_png(result.derained, a.output);
    if (!a.dump_streaks.empty()) {
        ensure_parent(a.dump_streaks);
        img::save_png(result.streaks, a.dump_streaks);
    }
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string derained;
    std::string reference;
    std::string out;
};

std::string metric_row(const std::string& label, const metrics::MetricReport& r) {
    return fmt::format("{},{}\n", label, metrics::to_csv(r));
}

metrics::MetricReport average(const std::vector<metrics::MetricReport>& reports) {
    metrics::MetricReport mean;
    for (const auto& r : reports) {
        mean.psnr += r.psnr;
        mean.ssim += r.ssim;
        mean.uiqi += r.uiqi;
        mean.gmsd += r.gmsd;
    }
    const double n = static_cast<double>(reports.size());
    mean.psnr /= n;
    mean.ssim /= n;
    mean.uiqi /= n;
    mean.gmsd /= n;
    return mean;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text << std::flush;
        return;
    }
    ensure_parent(path);
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        throw std::runtime_error(fmt::format("{}: cannot write", path));
    }
}

void run_eval(const EvalArgs& a) {
    const auto files = list_pngs(a.derained);
    if (files.empty()) {
        throw std::runtime_error(fmt::format("{}: no PNG images", a.derained));
    }
    std::string csv = "image," + metrics::csv_header() + "\n";
    std::vector<metrics::MetricReport> reports;
    for (const auto& f : files) {
        const auto ref = fs::path(a.reference) / f.filename();
        if (!fs::exists(ref)) {
            throw std::runtime_error(fmt::format("{}: no reference image", ref.string()));
        }
        reports.push_back(metrics::evaluate_protocol(f, ref));
        csv += metric_row(f.filename().string(), reports.back());
    }
    csv += metric_row("average", average(reports));
    emit(csv, a.out);
}

// --- ablate ---------------------------------------------------------------

struct AblateArgs {
    std::string data;
    std::string pca;
    std::string out;
    std::uint64_t seed = 1;
    int epochs = 50;
    int batch = 8;
    double lr = 0.01;
    // The regression head settles on the mean label at 0.01.
    double param_lr = 0.001;
    int depth = pipeline::kDefaultDepth;
    int filters = pipeline::kDefaultFilters;
    int patches = 500;
    int param_patches = 0;  // 0: same as patches
    double heldout = 0.2;
};

void run_ablate(const AblateArgs& a) {
    const auto files = list_pngs(a.data);
    if (files.size() < 2) {
        throw std::runtime_error("ablation needs at least two images (train and held out)");
    }
    if (!(a.heldout > 0.0 && a.heldout < 1.0)) {
        throw UsageError("--heldout must lie in (0, 1)");
    }
    auto images = load_all(files);
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    auto split_rng = make_rng(a.seed, Stream::heldout, 0);
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_test = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(a.heldout * static_cast<double>(images.size()))), 1,
        images.size() - 1);
    std::vector<std::size_t> test_ids(order.begin(), order.begin() + n_test);
    std::sort(test_ids.begin(), test_ids.end());
    std::vector<ImageTensor> train;
    for (std::size_t k = n_test; k < order.size(); ++k) {
        train.push_back(images[order[k]]);
    }
    spdlog::info("{} training images, {} held out", train.size(), test_ids.size());

    const fs::path out(a.out);
    ensure_dir(out);
    kspace::PcaBasis pca;
    if (a.pca.empty()) {
        pca = kspace::fit_pca(kspace::sample_kernel_family(91, 16), 0.99);
        kspace::save_basis(pca, out / "basis.kgpb");
    } else {
        pca = kspace::load_basis(a.pca);
    }

    TrainArgs targs;
    targs.epochs = a.epochs;
    targs.batch = a.batch;
    targs.lr = a.lr;
    targs.seed = a.seed;
    targs.depth = a.depth;
    targs.filters = a.filters;
    targs.patches = a.patches;
    auto cfg = to_config(targs);
    // Sample i depends only on (seed, i), so the derain set is a prefix of the
    // parameter net's set whenever that one is larger.
    const int param_patches = a.param_patches > 0 ? a.param_patches : cfg.patches;
    const auto all = pipeline::build_training_set(train, std::max(param_patches, cfg.patches),
                                                  cfg.seed, pca);
    const pipeline::Dataset param_data(all.begin(), all.begin() + param_patches);
    const pipeline::Dataset data(all.begin(), all.begin() + cfg.patches);
    auto on_epoch = [](int epoch, double loss) { spdlog::info("epoch {} loss {:.6g}", epoch, loss); };

    spdlog::info("training parameter net");
    auto param_cfg = cfg;
    param_cfg.learning_rate = a.param_lr;
    const auto param = pipeline::train_param_net(param_data, param_cfg, on_epoch).model;
    nn::save_checkpoint(param, out / "param.kgcn");

    using pipeline::AblationMode;
    std::vector<std::pair<AblationMode, nn::Checkpoint>> nets;
    for (auto mode : {AblationMode::full, AblationMode::zero_kernel, AblationMode::derain_only}) {
        spdlog::info("training derain net ({})", pipeline::to_string(mode));
        cfg.mode = mode;
        auto model = pipeline::train_derain_net(data, pca.dimension, cfg, on_epoch).model;
        nn::save_checkpoint(model, out / (std::string(pipeline::to_string(mode)) + ".kgcn"));
        nets.emplace_back(mode, std::move(model));
    }

    // Rows: rainy input, the three trained models, and the full model fed zero maps.
    std::vector<std::string> labels{"rainy", "full", "zero_kernel", "derain_only",
                                    "full_zero_maps"};
    std::vector<std::vector<metrics::MetricReport>> reports(labels.size());
    for (std::size_t i = 0; i < test_ids.size(); ++i) {
        const auto& clean = images[test_ids[i]];
        auto rng = make_rng(a.seed, Stream::heldout, i + 1);
        const auto params = rain::sample_rain_params(rng);
        const auto rainy = img::quantize(rain::synthesize_rainy(clean, params).rainy);
        reports[0].push_back(metrics::evaluate(rainy, clean));
        for (std::size_t m = 0; m < nets.size(); ++m) {
            const auto r = pipeline::derain_image(rainy, param, nets[m].second, pca, nets[m].first);
            reports[m + 1].push_back(metrics::evaluate(img::quantize(r.derained), clean));
        }
        const auto r = pipeline::derain_image(rainy, param, nets[0].second, pca,
                                              AblationMode::zero_kernel);
        reports[4].push_back(metrics::evaluate(img::quantize(r.derained), clean));
    }
    std::string csv = "model," + metrics::csv_header() + "\n";
    for (std::size_t m = 0; m < labels.size(); ++m) {
        csv += metric_row(labels[m], average(reports[m]));
    }
    emit(csv, (out / "ablation.csv").string());
    std::cout << csv << std::flush;
}

// --- config files ---------------------------------------------------------

std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(fmt::format("{}: cannot read config file", path.string()));
    }
    auto trim = [](std::string t) {
        const auto b = t.find_first_not_of(" \t\r");
        const auto e = t.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
    };
    std::vector<std::pair<std::string, std::string>> items;
    int number = 0;
    for (std::string line; std::getline(in, line);) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(fmt::format("{}:{}: expected 'key = value'", path.string(), number));
        }
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
            value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        if (key.empty()) {
            throw UsageError(fmt::format("{}:{}: missing key", path.string(), number));
        }
        items.emplace_back(std::move(key), std::move(value));
    }
    return items;
}

// Replaces "--config FILE" after the subcommand with the file's options,
// placed first so that explicit flags override them.
std::vector<std::string> splice_config(const CLI::App& app, std::vector<std::string> args) {
    if (args.size() < 2) {
        return args;
    }
    const auto* sub = app.get_subcommand_no_throw(args[1]);
    if (sub == nullptr) {
        return args;
    }
    std::vector<std::string> rest;
    std::string config;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (config.empty()) {
        return args;
    }
    std::vector<std::string> out{args[0], args[1]};
    for (auto& [key, value] : read_config(config)) {
        const auto* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr || key == "config" || key == "help") {
            throw UsageError(fmt::format("{}: unknown key '{}' for {}", config, key, args[1]));
        }
        out.push_back("--" + key);
        out.push_back(value);
    }
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    setup_logging();
    CLI::App app{"Kernel-guided single-image rain streak removal"};
    app.require_subcommand(1);
    app.name("kgcnn");
    // A value from the config file is followed by any flag the user gave.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config_help;
    auto configurable = [&config_help](CLI::App* sub) {
        sub->add_option("--config", config_help,
                        "Flat 'key = value' file of long option names; flags take precedence");
    };

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Add synthetic rain to a directory of clean PNGs");
    configurable(simulate);
    simulate->add_option("--input", sim.input, "Directory of clean PNG images")->required();
    simulate->add_option("--output", sim.output, "Output directory")->required();
    simulate->add_option("--seed", sim.seed, "Master seed")->capture_default_str();

    DecomposeArgs dec;
    auto* decompose = app.add_subcommand("decompose", "Split an image into structure and texture");
    configurable(decompose);
    decompose->add_option("input", dec.input, "Input PNG")->required();
    decompose->add_option("--out", dec.out, "Output directory (default: next to the input)");
    decompose->add_option("--radius", dec.radius, "Guided filter radius")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    decompose->add_option("--eps", dec.eps, "Guided filter regularizer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    FitPcaArgs fit;
    auto* fit_pca = app.add_subcommand("fit-pca", "Fit the kernel projection basis");
    configurable(fit_pca);
    fit_pca->add_option("--out", fit.out, "Basis file to write")->required();
    fit_pca->add_option("--theta-steps", fit.theta_steps, "Grid points over theta")
        ->check(CLI::Range(2, 100000))
        ->capture_default_str();
    fit_pca->add_option("--length-steps", fit.length_steps, "Grid points over length")
        ->check(CLI::Range(2, 100000))
        ->capture_default_str();
    fit_pca->add_option("--energy", fit.energy, "Retained eigenvalue fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the parameter or derain network");
    configurable(train);
    train->add_option("--net", tr.net, "Network to train")
        ->check(CLI::IsMember({"param", "derain"}))
        ->capture_default_str();
    train->add_option("--mode", tr.mode, "Guidance mode")
        ->check(CLI::IsMember({"full", "zero-kernel", "zero_kernel", "derain-only", "derain_only"}))
        ->capture_default_str();
    train->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    train->add_option("--batch", tr.batch)->check(CLI::Range(2, 1 << 20))->capture_default_str();
    train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--seed", tr.seed, "Master seed")->capture_default_str();
    train->add_option("--depth", tr.depth, "Derain net convolution count (even, >= 4)")
        ->capture_default_str();
    train->add_option("--filters", tr.filters)->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--patches", tr.patches, "Synthetic training patches")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train->add_option("--data", tr.data, "Directory of clean PNG images")->required();
    train->add_option("--pca", tr.pca, "Basis file")->required();
    train->add_option("--out", tr.out, "Checkpoint to write")->required();
    train->add_option("--loss-csv", tr.loss_csv, "Optional per-epoch loss record");

    DerainArgs dr;
    auto* derain = app.add_subcommand("derain", "Remove rain streaks from one image");
    configurable(derain);
    derain->add_option("--param", dr.param, "Parameter net checkpoint")->required();
    derain->add_option("--derain", dr.derain, "Derain net checkpoint")->required();
    derain->add_option("--pca", dr.pca, "Basis file")->required();
    derain->add_option("--mode", dr.mode, "Guidance mode (default: from the checkpoint)")
        ->check(CLI::IsMember({"full", "zero-kernel", "zero_kernel", "derain-only", "derain_only"}));
    derain->add_option("--dump-streaks", dr.dump_streaks, "Also write the estimated streaks");
    derain->add_option("input", dr.input, "Rainy PNG")->required();
    derain->add_option("output", dr.output, "Derained PNG")->required();

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Score derained images against references");
    configurable(eval);
    eval->add_option("derained", ev.derained, "Directory of derained PNGs")->required();
    eval->add_option("reference", ev.reference, "Directory of references with the same names")
        ->required();
    eval->add_option("--out", ev.out, "CSV file (default: standard output)");

    AblateArgs ab;
    auto* ablate = app.add_subcommand("ablate", "Train and compare the guidance ablations");
    configurable(ablate);
    ablate->add_option("--data", ab.data, "Directory of clean PNG images")->required();
    ablate->add_option("--pca", ab.pca, "Basis file (default: fit the standard grid)");
    ablate->add_option("--out", ab.out, "Output directory")->required();
    ablate->add_option("--seed", ab.seed, "Master seed")->capture_default_str();
    ablate->add_option("--epochs", ab.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    ablate->add_option("--batch", ab.batch)->check(CLI::Range(2, 1 << 20))->capture_default_str();
    ablate->add_option("--lr", ab.lr, "Derain net learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ablate->add_option("--param-lr", ab.param_lr, "Parameter net learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ablate->add_option("--depth", ab.depth)->capture_default_str();
    ablate->add_option("--filters", ab.filters)->check(CLI::PositiveNumber)->capture_default_str();
    ablate->add_option("--patches", ab.patches, "Synthetic training patches")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ablate->add_option("--param-patches", ab.param_patches,
                       "Patches for the parameter net (0: same as --patches)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    ablate->add_option("--heldout", ab.heldout, "Fraction of images held out for scoring")
        ->capture_default_str();

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = splice_config(app, std::move(args));
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    std::vector<const char*> spliced;
    for (const auto& a : args) {
        spliced.push_back(a.c_str());
    }

    try {
        app.parse(static_cast<int>(spliced.size()), spliced.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        for (auto* sub : app.get_subcommands()) {
            log_config(*sub);
        }
        if (simulate->parsed()) {
            run_simulate(sim);
        } else if (decompose->parsed()) {
            run_decompose(dec);
        } else if (fit_pca->parsed()) {
            run_fit_pca(fit);
        } else if (train->parsed()) {
            if (tr.net == "derain" && (tr.depth < 4 || tr.depth % 2 != 0)) {
                throw UsageError("--depth must be even and at least 4");
            }
            run_train(tr);
        } else if (derain->parsed()) {
            run_derain(dr);
        } else if (eval->parsed()) {
            run_eval(ev);
        } else if (ablate->parsed()) {
            if (ab.depth < 4 || ab.depth % 2 != 0) {
                throw UsageError("--depth must be even and at least 4");
            }
            run_ablate(ab);
        }
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        std::cerr << app.help();
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace kgcnn::cli
