// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_suite.hpp"
#include "kgcnn/decompose.hpp"
#include "kgcnn/kernelspace.hpp"
#include "kgcnn/metrics.hpp"
#include "kgcnn/pipeline.hpp"
#include "kgcnn/rainsim.hpp"
#include "oracles.hpp"
#include "scenes.hpp"
#include "temp_dir.hpp"

using namespace kgcnn;
using img::ImageTensor;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass;
    std::string detail;
};

// --- 1 ---------------------------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, std::vector<gradsuite::Check>>> groups{
        {"conv3x3", gradsuite::conv3x3(11)},
        {"relu", gradsuite::relu(12)},
        {"batchnorm", gradsuite::batchnorm(13)},
        {"fully_connected", gradsuite::fully_connected(14)},
        {"frobenius_loss", gradsuite::frobenius(15)},
        {"mean_pool2", gradsuite::mean_pool(16)},
        {"network", gradsuite::network(17)},
    };
    const double elapsed = seconds_since(t0);
    bool pass = elapsed < 30.0;
    double worst = 0.0;
    std::string worst_name;
    std::size_t total = 0;
    for (const auto& [layer, checks] : groups) {
        std::set<std::string> shapes;
        for (const auto& c : checks) {
            shapes.insert(c.name.substr(0, c.name.find(" d/")));
            ++total;
            if (!(c.error < 1e-6)) {
                pass = false;
            }
            if (!(c.error <= worst)) {
                worst = c.error;
                worst_name = c.name;
            }
        }
        if (layer != "network" && shapes.size() < 3) {
            pass = false;
        }
    }
    return {pass, fmt::format("{} checks, worst {:.2e} ({}), {:.2f} s", total, worst, worst_name,
                              elapsed)};
}

// --- 2 ---------------------------------------------------------------------

Outcome kernel_suite() {
    Rng rng(2024);
    std::uniform_real_distribution<double> theta(rain::kThetaMin, rain::kThetaMax);
    std::uniform_real_distribution<double> length(rain::kLengthMin, rain::kLengthMax);
    int bad = 0;
    double worst_sum = 0.0;
    for (int i = 0; i < 500; ++i) {
        const auto k = rain::make_motion_kernel(theta(rng), length(rng));
        double sum = 0.0;
        for (int r = 0; r < k.size; ++r) {
            for (int c = 0; c < k.size; ++c) {
                const double v = k.at(r, c);
                sum += v;
                if (v < 0.0 || std::abs(v - k.at(k.size - 1 - r, k.size - 1 - c)) > 1e-15) {
                    ++bad;
                }
            }
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    bool pass = bad == 0 && worst_sum <= 1e-12;

    const auto delta = rain::make_motion_kernel(90.0, 1.0);
    for (int r = 0; r < delta.size; ++r) {
        for (int c = 0; c < delta.size; ++c) {
            const bool centre = r == delta.size / 2 && c == delta.size / 2;
            pass = pass && delta.at(r, c) == (centre ? 1.0 : 0.0);
        }
    }
    const auto hand = rain::make_motion_kernel(0.0, 3.0, 3);
    const double third = 1.0 / 3.0;
    const std::vector<double> expect{0, 0, 0, third, third, third, 0, 0, 0};
    for (std::size_t i = 0; i < expect.size(); ++i) {
        pass = pass && std::abs(hand.weights[i] - expect[i]) <= 1e-15;
    }
    return {pass, fmt::format("500 kernels, {} violations, worst |sum - 1| {:.1e}", bad,
                              worst_sum)};
}

// --- 3 ---------------------------------------------------------------------

Outcome decomposition_suite() {
    double worst_sum = 0.0;
    for (int i = 0; i < 50; ++i) {
        const int h = 8 + (i * 7) % 57;
        const int w = 8 + (i * 13) % 61;
        const auto image = oracle::random_image(h, w, i % 2 == 0 ? 3 : 1, 300 + i);
        const auto parts = decomp::split_texture(image);
        for (std::size_t k = 0; k < image.size(); ++k) {
            worst_sum = std::max(worst_sum, std::abs(parts.structure.data()[k] +
                                                     parts.texture.data()[k] - image.data()[k]));
        }
    }
    double worst_gf = 0.0;
    for (int i = 0; i < 5; ++i) {
        const auto p = oracle::random_image(8, 8, 1, 400 + i);
        const auto guide = oracle::random_image(8, 8, 1, 500 + i);
        for (auto [r, eps] : {std::pair{1, 0.01}, std::pair{2, 1.0}, std::pair{3, 1e-4}}) {
            const auto got = decomp::guided_filter(p, guide, {r, eps});
            const auto want = oracle::guided_filter(p, guide, r, eps, oracle::box_filter);
            for (std::size_t k = 0; k < got.size(); ++k) {
                worst_gf = std::max(worst_gf, std::abs(got.data()[k] - want.data()[k]));
            }
        }
    }
    return {worst_sum <= 1e-12 && worst_gf <= 1e-10,
            fmt::format("reconstruction {:.1e}, guided filter vs oracle {:.1e}", worst_sum,
                        worst_gf)};
}

// --- 4 ---------------------------------------------------------------------

Outcome pca_suite() {
    const auto family = kspace::sample_kernel_family(91, 16);
    const auto basis = kspace::fit_pca(family, 0.99);
    const int n = basis.feature_count();
    double ortho = 0.0;
    for (int a = 0; a < basis.dimension; ++a) {
        for (int b = a; b < basis.dimension; ++b) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) {
                dot += basis.component(a)[i] * basis.component(b)[i];
            }
            ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
        }
    }
    // Reconstruction error as captured energy, ||k - k'||^2 / ||k||^2.
    double energy_err = 0.0;
    double norm_err = 0.0;
    for (const auto& k : family) {
        const auto back = kspace::reconstruct(kspace::project(k, basis), basis);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            num += (back[i] - k.weights[i]) * (back[i] - k.weights[i]);
            den += k.weights[i] * k.weights[i];
        }
        energy_err += num / den;
        norm_err += std::sqrt(num / den);
    }
    energy_err /= static_cast<double>(family.size());
    norm_err /= static_cast<double>(family.size());
    const bool pass = family.size() == 1456 && ortho <= 1e-10 && basis.energy_kept >= 0.99 &&
                      energy_err <= 0.01 && basis.dimension <= kspace::kMaxDimension;
    return {pass, fmt::format("t = {} (cap {}), energy {:.4f}, orthonormality {:.1e}, mean "
                              "reconstruction error {:.4f} (norm ratio {:.4f})",
                              basis.dimension, kspace::kMaxDimension, basis.energy_kept, ortho,
                              energy_err, norm_err)};
}

// --- 5 ---------------------------------------------------------------------

Outcome metric_suite() {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        const auto a = oracle::random_image(32, 28, i == 2 ? 1 : 3, 600 + i);
        auto b = oracle::random_image(32, 28, i == 2 ? 1 : 3, 700 + i);
        for (std::size_t k = 0; k < b.size(); ++k) {
            b.data()[k] = 0.7 * a.data()[k] + 0.3 * b.data()[k];
        }
        double mse = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            mse += (a.data()[k] - b.data()[k]) * (a.data()[k] - b.data()[k]);
        }
        mse /= static_cast<double>(a.size());
        worst = std::max(worst, std::abs(metrics::psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
        worst = std::max(worst, std::abs(metrics::ssim(a, b) - oracle::ssim(a, b)));
        worst = std::max(worst, std::abs(metrics::uiqi(a, b) - oracle::uiqi(a, b)));
        worst = std::max(worst, std::abs(metrics::gmsd(a, b) - oracle::gmsd(a, b)));
    }
    const auto x = oracle::random_image(24, 24, 3, 800);
    const auto id = metrics::evaluate(x, x);
    const bool identity = id.psnr == 99.0 && std::abs(id.ssim - 1.0) <= 1e-12 &&
                          std::abs(id.uiqi - 1.0) <= 1e-12 && std::abs(id.gmsd) <= 1e-12;
    ImageTensor zero(8, 8, 3);
    ImageTensor half(8, 8, 3);
    for (double& v : half.data()) v = 0.5;
    const double hand = metrics::psnr(zero, half);
    return {worst <= 1e-8 && identity && std::abs(hand - 6.0206) <= 1e-3,
            fmt::format("worst oracle gap {:.1e}, identity ({}, {}, {}, {}), 0 vs 0.5 -> {:.4f} dB",
                        worst, id.psnr, id.ssim, id.uiqi, id.gmsd, hand)};
}

// --- 6 to 9 ----------------------------------------------------------------

constexpr std::uint64_t kSeed = 42;
constexpr int kTrainScenes = 40;
constexpr int kHeldoutScenes = 10;
constexpr int kSceneSize = 128;
// The parameter net overfits 500 patches (held-out length error no better
// than guessing the midpoint), so it sees a larger set. The derain net's
// 500 patches are a prefix of it.
constexpr int kParamPatches = 3000;

struct DeskRun {
    kspace::PcaBasis pca;
    pipeline::TrainResult param;
    pipeline::TrainResult full;
    pipeline::TrainResult zero_kernel;
    double train_seconds = 0.0;  // parameter net + full derain net
    double zero_seconds = 0.0;
};

pipeline::TrainConfig desk_config() {
    pipeline::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch = 8;
    cfg.patches = 500;
    cfg.seed = kSeed;
    cfg.depth = 8;
    cfg.filters = 16;
    return cfg;
}

std::vector<ImageTensor> scene_set(std::uint64_t first_seed, int count) {
    std::vector<ImageTensor> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(scenes::make_scene(kSceneSize, kSceneSize, first_seed + i));
    }
    return out;
}

const DeskRun& desk_run() {
    static const DeskRun run = [] {
        DeskRun r;
        r.pca = kspace::fit_pca(kspace::sample_kernel_family(91, 16), 0.99);
        const auto clean = scene_set(1, kTrainScenes);
        auto cfg = desk_config();
        const auto t0 = Clock::now();
        const auto param_data = pipeline::build_training_set(clean, kParamPatches, cfg.seed, r.pca);
        const pipeline::Dataset data(param_data.begin(), param_data.begin() + cfg.patches);
        auto log = [](const char* what) {
            return [what](int epoch, double loss) {
                if (epoch % 10 == 0) {
                    std::cerr << fmt::format("  [{}] epoch {} loss {:.6g}\n", what, epoch, loss);
                }
            };
        };
        auto param_cfg = cfg;
        param_cfg.learning_rate = 0.001;
        param_cfg.patches = kParamPatches;
        r.param = pipeline::train_param_net(param_data, param_cfg, log("param"));
        cfg.learning_rate = 0.01;
        cfg.mode = pipeline::AblationMode::full;
        r.full = pipeline::train_derain_net(data, r.pca.dimension, cfg, log("full"));
        r.train_seconds = seconds_since(t0);
        const auto t1 = Clock::now();
        cfg.mode = pipeline::AblationMode::zero_kernel;
        r.zero_kernel = pipeline::train_derain_net(data, r.pca.dimension, cfg, log("zero_kernel"));
        r.zero_seconds = seconds_since(t1);
        return r;
    }();
    return run;
}

struct HeldoutImage {
    ImageTensor clean;
    ImageTensor rainy;
};

const std::vector<HeldoutImage>& heldout_images() {
    static const auto images = [] {
        std::vector<HeldoutImage> out;
        const auto clean = scene_set(1001, kHeldoutScenes);
        for (int i = 0; i < kHeldoutScenes; ++i) {
            auto rng = make_rng(kSeed, Stream::heldout, static_cast<std::uint64_t>(i) + 1);
            const auto params = rain::sample_rain_params(rng);
            out.push_back({clean[i], img::quantize(rain::synthesize_rainy(clean[i], params).rainy)});
        }
        return out;
    }();
    return images;
}

Outcome training_progress() {
    const auto& run = desk_run();
    const auto& p = run.param.loss_history;
    const auto& d = run.full.loss_history;
    const bool pass = p.back() < 0.5 * p.front() && d.back() < 0.5 * d.front() &&
                      run.train_seconds < 30 * 60;
    return {pass, fmt::format("param loss {:.4g} -> {:.4g} ({} patches), derain loss {:.4g} -> "
                              "{:.4g} ({} patches), {} epochs, {:.1f} min (zero-kernel model "
                              "another {:.1f} min)",
                              p.front(), p.back(), kParamPatches, d.front(), d.back(),
                              desk_config().patches, desk_config().epochs,
                              run.train_seconds / 60, run.zero_seconds / 60)};
}

Outcome end_to_end() {
    const auto& run = desk_run();
    double rainy_psnr = 0.0;
    double derained_psnr = 0.0;
    double worst = 0.0;
    std::size_t unclamped = 0;
    for (const auto& h : heldout_images()) {
        const auto r = pipeline::derain_image(h.rainy, run.param.model, run.full.model, run.pca,
                                              pipeline::AblationMode::full);
        rainy_psnr += metrics::psnr(h.rainy, h.clean);
        derained_psnr += metrics::psnr(img::quantize(r.derained), h.clean);
        for (std::size_t k = 0; k < h.rainy.size(); ++k) {
            const double diff = h.rainy.data()[k] - r.streaks.data()[k];
            if (diff >= 0.0 && diff <= 1.0) {
                ++unclamped;
                worst = std::max(worst, std::abs(r.derained.data()[k] + r.streaks.data()[k] -
                                                 h.rainy.data()[k]));
            }
        }
    }
    rainy_psnr /= kHeldoutScenes;
    derained_psnr /= kHeldoutScenes;
    return {derained_psnr - rainy_psnr >= 2.0 && worst <= 1e-12 && unclamped > 0,
            fmt::format("rainy {:.3f} dB -> derained {:.3f} dB (gain {:+.3f}), reconstruction "
                        "{:.1e} over {} unclamped values",
                        rainy_psnr, derained_psnr, derained_psnr - rainy_psnr, worst, unclamped)};
}

Outcome ablation_ordering() {
    const auto& run = desk_run();
    auto score = [&](const nn::Checkpoint& model, pipeline::AblationMode mode, const HeldoutImage& h) {
        const auto r = pipeline::derain_image(h.rainy, run.param.model, model, run.pca, mode);
        return std::pair{metrics::psnr(img::quantize(r.derained), h.clean), r.streaks};
    };
    double full = 0.0;
    double zero = 0.0;
    double guidance_effect = 0.0;
    for (const auto& h : heldout_images()) {
        const auto [full_psnr, full_streaks] =
            score(run.full.model, pipeline::AblationMode::full, h);
        full += full_psnr;
        zero += score(run.zero_kernel.model, pipeline::AblationMode::zero_kernel, h).first;
        // Same trained full model, guidance replaced by zero maps.
        const auto unguided = score(run.full.model, pipeline::AblationMode::zero_kernel, h).second;
        double diff = 0.0;
        for (std::size_t k = 0; k < full_streaks.size(); ++k) {
            diff += std::abs(full_streaks.data()[k] - unguided.data()[k]);
        }
        guidance_effect += diff / static_cast<double>(full_streaks.size());
    }
    full /= kHeldoutScenes;
    zero /= kHeldoutScenes;
    guidance_effect /= kHeldoutScenes;
    return {full > zero,
            fmt::format("full {:.3f} dB vs zero-kernel {:.3f} dB ({:+.3f}); final training loss "
                        "full {:.4g} vs zero-kernel {:.4g}; guidance changes full-model streaks by "
                        "{:.2e} mean abs",
                        full, zero, full - zero, run.full.loss_history.back(),
                        run.zero_kernel.loss_history.back(), guidance_effect)};
}

Outcome parameter_accuracy() {
    const auto& run = desk_run();
    const auto clean = scene_set(1001, kHeldoutScenes);
    const auto data = pipeline::build_training_set(clean, 100, kSeed + 1000, run.pca);
    std::vector<ImageTensor> textures;
    for (const auto& s : data) textures.push_back(s.texture);
    const auto est = pipeline::estimate_kernels(textures, run.param.model);
    double theta_mae = 0.0, length_mae = 0.0, theta_mid = 0.0, length_mid = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        theta_mae += std::abs(est[i].theta - data[i].params.theta);
        length_mae += std::abs(est[i].length - data[i].params.length);
        theta_mid += std::abs(90.0 - data[i].params.theta);
        length_mid += std::abs(22.5 - data[i].params.length);
    }
    const double n = static_cast<double>(data.size());
    theta_mae /= n;
    length_mae /= n;
    theta_mid /= n;
    length_mid /= n;
    const bool soft = theta_mae < 5.0 && length_mae < 3.0;
    // Single vertical fixture: theta 90, length 20.
    const auto clean_patch = pipeline::to_rgb(clean[0].crop(32, 32, 64, 64));
    const auto fixture = rain::synthesize_rainy(clean_patch, {90.0, 20.0, 0.95, 0.3, kSeed});
    const auto vertical =
        pipeline::estimate_kernel(decomp::split_texture(fixture.rainy).texture, run.param.model);
    const bool floor = theta_mae < theta_mid && length_mae < length_mid;
    return {soft || floor,
            fmt::format("angle MAE {:.2f} deg (midpoint {:.2f}), length MAE {:.2f} px (midpoint "
                        "{:.2f}); soft target {}, floor {}; vertical fixture estimate theta "
                        "{:.1f} length {:.1f}",
                        theta_mae, theta_mid, length_mae, length_mid, soft ? "met" : "missed",
                        floor ? "met" : "missed", vertical.theta, vertical.length)};
}

// --- 10 --------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("SPDLOG_LEVEL=warn \"") + KGCNN_CLI_PATH + "\" " + args;
    return std::system(cmd.c_str());
}

Outcome determinism() {
    TempDir dir;
    std::filesystem::create_directories(dir / "clean");
    for (int i = 0; i < 3; ++i) {
        img::save_png(scenes::make_scene(80, 96, 50 + i),
                      dir / fmt::format("clean/scene_{}.png", i));
    }
    auto q = [](const std::filesystem::path& p) { return "\"" + p.string() + "\""; };
    bool ok = run_cli(fmt::format("fit-pca --out {} --theta-steps 12 --length-steps 4",
                                  q(dir / "b.kgpb"))) == 0;
    const std::string common = fmt::format("--data {} --pca {} --epochs 2 --patches 12 --batch 4 "
                                           "--seed 9",
                                           q(dir / "clean"), q(dir / "b.kgpb"));
    for (const char* tag : {"a", "b"}) {
        ok = ok && run_cli(fmt::format("train --net param {} --out {}", common,
                                       q(dir / fmt::format("param_{}.kgcn", tag)))) == 0;
        ok = ok && run_cli(fmt::format("train --net derain --depth 4 --filters 6 {} --out {}",
                                       common, q(dir / fmt::format("derain_{}.kgcn", tag)))) == 0;
        ok = ok && run_cli(fmt::format("simulate --input {} --output {} --seed 9",
                                       q(dir / "clean"), q(dir / fmt::format("sim_{}", tag)))) == 0;
    }
    if (!ok) {
        return {false, "a CLI invocation failed"};
    }
    int compared = 0;
    int differing = 0;
    auto compare = [&](const std::filesystem::path& a, const std::filesystem::path& b) {
        ++compared;
        const auto x = slurp(a);
        if (x.empty() || x != slurp(b)) ++differing;
    };
    compare(dir / "param_a.kgcn", dir / "param_b.kgcn");
    compare(dir / "derain_a.kgcn", dir / "derain_b.kgcn");
    for (const auto& entry : std::filesystem::directory_iterator(dir / "sim_a")) {
        compare(entry.path(), dir / "sim_b" / entry.path().filename());
    }
    return {differing == 0 && compared == 2 + 9,
            fmt::format("{} artifact pairs compared, {} differ", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"kernel suite", kernel_suite},
        {"decomposition suite", decomposition_suite},
        {"PCA suite", pca_suite},
        {"metric suite", metric_suite},
        {"training progress", training_progress},
        {"end-to-end improvement", end_to_end},
        {"ablation ordering", ablation_ordering},
        {"parameter-net accuracy", parameter_accuracy},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(number)) {
            continue;
        }
        Outcome outcome{false, ""};
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        failures += !outcome.pass;
        std::cout << fmt::format("criterion {:>2} {:<24} {}  {}", number, criteria[i].first,
                                 outcome.pass ? "PASS" : "FAIL", outcome.detail)
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
