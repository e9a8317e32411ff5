#include "owslr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "owslr/checkpoint.hpp"
#include "owslr/gradcheck.hpp"
#include "owslr/trainer.hpp"

namespace owslr {

namespace {

bool is_image(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

void require_channels(const ImageBuffer& img, std::size_t channels, const std::filesystem::path& path) {
    if (img.channels != channels) {
        throw ConfigError("channels: " + path.string() + " has " + std::to_string(img.channels) +
                          " channel(s), the model uses " + std::to_string(channels));
    }
}

std::string db(double v) {
    if (std::isinf(v)) {
        return "inf";
    }
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

} // namespace

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image(entry.path())) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) {
        throw IoError("no .png/.pgm/.ppm images in " + dir.string());
    }
    return out;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.train_dir.empty()) {
        throw ConfigError("train_dir: required for training");
    }
    std::vector<ImageBuffer> images;
    for (const auto& p : list_images(cfg.train_dir)) {
        images.push_back(read_image(p));
        require_channels(images.back(), cfg.model.backbone.in_channels, p);
    }
    auto session = new_session(cfg);
    out << "epoch,loss,lr\n";
    while (session.epoch < cfg.train.epochs) {
        const double lr = lr_schedule(session.epoch, cfg.train);
        const std::size_t epoch = session.epoch;
        const double loss = run_epoch(session, images);
        save_checkpoint(session, cfg.checkpoint);
        out << epoch << ',' << std::setprecision(9) << loss << ',' << lr << '\n' << std::flush;
    }
    return 0;
}

int cmd_upscale(const RunConfig& cfg, const std::filesystem::path& input, double scale,
                const std::filesystem::path& output, std::ostream& out) {
    const auto session = load_checkpoint(cfg.checkpoint);
    const auto img = read_image(input);
    require_channels(img, session.model.config.backbone.in_channels, input);
    const auto start = std::chrono::steady_clock::now();
    const auto result = infer_full(session.model, img, scale);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    write_image(result, output);
    out << "output " << result.height << "x" << result.width << " -> " << output.string() << '\n'
        << "time " << std::fixed << std::setprecision(3) << elapsed.count() << " s\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& folder, double scale, std::ostream& out) {
    if (!std::isfinite(scale) || scale < 1.0) {
        throw ConfigError("scale: eval expects a downscale factor >= 1");
    }
    const auto session = load_checkpoint(cfg.checkpoint);
    out << "image,model_psnr,bicubic_psnr\n";
    double model_sum = 0.0, bicubic_sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : list_images(folder)) {
        const auto hr = read_image(p);
        require_channels(hr, session.model.config.backbone.in_channels, p);
        const auto lr_h = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(hr.height / scale + 1e-9)));
        const auto lr_w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(hr.width / scale + 1e-9)));
        const auto lr = bicubic_resize(hr, lr_h, lr_w);
        const double model_db = psnr(infer_to_size(session.model, lr, hr.height, hr.width), hr);
        const double bicubic_db = psnr(bicubic_resize(lr, hr.height, hr.width), hr);
        out << p.filename().string() << ',' << db(model_db) << ',' << db(bicubic_db) << '\n';
        model_sum += model_db;
        bicubic_sum += bicubic_db;
        ++count;
    }
    out << "mean," << db(model_sum / static_cast<double>(count)) << ',' << db(bicubic_sum / static_cast<double>(count))
        << '\n';
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances, std::ostream& out) {
    bool ok = true;
    out << "check,instances,max_rel_error,tolerance,status\n";
    for (const auto& r : run_gradcheck_suite(seed, instances)) {
        out << r.name << ',' << r.instances << ',' << std::scientific << std::setprecision(3) << r.max_rel_error << ','
            << r.tolerance << ',' << (r.passed() ? "pass" : "FAIL") << '\n';
        out.unsetf(std::ios::floatfield);
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

} // namespace owslr
