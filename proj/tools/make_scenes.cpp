#include <CLI11.hpp>

#include <filesystem>
#include <fmt/format.h>

#include "kgcnn/imgcore.hpp"
#include "scenes.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write procedural clean scenes as PNGs"};
    std::string out;
    int count = 20;
    int height = 128;
    int width = 128;
    std::uint64_t seed = 1;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--count", count)->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--height", height)->check(CLI::Range(64, 1 << 14))->capture_default_str();
    app.add_option("--width", width)->check(CLI::Range(64, 1 << 14))->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    try {
        std::filesystem::create_directories(out);
        for (int i = 0; i < count; ++i) {
            const auto scene = kgcnn::scenes::make_scene(height, width, seed + static_cast<std::uint64_t>(i));
            kgcnn::img::save_png(scene, std::filesystem::path(out) / fmt::format("scene_{:03d}.png", i));
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
