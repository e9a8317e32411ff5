// Command-line front end: train / upscale / eval / gradcheck.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "owslr/commands.hpp"
#include "owslr/error.hpp"

namespace {

void echo_config(const owslr::RunConfig& cfg) {
    std::istringstream lines(owslr::to_text(cfg));
    for (std::string line; std::getline(lines, line);) {
        std::cout << "# " << line << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Arbitrary-scale super-resolution with overlapping-window decoding"};
    app.require_subcommand(1);

    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("-p,--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("-s,--set", overrides, "override a configuration key (key=value), repeatable");

    auto* train = app.add_subcommand("train", "train a model on the images in train_dir");

    auto* upscale = app.add_subcommand("upscale", "upscale one image by any real factor");
    std::string up_input, up_output;
    double up_scale = 2.0;
    upscale->add_option("input", up_input, "input image")->required()->check(CLI::ExistingFile);
    upscale->add_option("--scale", up_scale, "magnification factor")->required();
    upscale->add_option("-o,--output", up_output, "output image (.png/.pgm/.ppm)")->required();

    auto* eval = app.add_subcommand("eval", "PSNR of model vs bicubic on a folder of HR images");
    std::string eval_dir;
    double eval_scale = 2.0;
    eval->add_option("folder", eval_dir, "folder of HR images (defaults to val_dir)");
    eval->add_option("--scale", eval_scale, "degradation / restoration factor")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks at f64");
    std::uint64_t seed = 0;
    std::size_t instances = 20;
    gradcheck->add_option("--seed", seed, "seed for the random instances");
    gradcheck->add_option("--instances", instances, "instances per check")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        std::vector<std::string> all;
        if (!preset.empty()) {
            all.push_back("preset=" + preset);
        }
        all.insert(all.end(), overrides.begin(), overrides.end());
        const auto cfg = config_path.empty() ? owslr::parse_config("", all) : owslr::load_config(config_path, all);

        if (*gradcheck) {
            return owslr::cmd_gradcheck(seed, instances, std::cout);
        }
        echo_config(cfg);
        if (*train) {
            return owslr::cmd_train(cfg, std::cout);
        }
        if (*upscale) {
            return owslr::cmd_upscale(cfg, up_input, up_scale, up_output, std::cout);
        }
        if (*eval) {
            const std::string folder = eval_dir.empty() ? cfg.val_dir : eval_dir;
            if (folder.empty()) {
                throw owslr::ConfigError("val_dir: eval needs a folder argument or val_dir");
            }
            return owslr::cmd_eval(cfg, folder, eval_scale, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
