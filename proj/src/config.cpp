#include "owslr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "owslr/error.hpp"

namespace owslr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(out)) {
            throw std::invalid_argument(v);
        }
        return out;
    } catch (const std::logic_error&) {
        throw ConfigError(key + ": expected a real number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "off" || v == "no") {
        return false;
    }
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<std::size_t> to_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) {
        out.push_back(to_count(key, item));
    }
    return out;
}

std::string join(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += (i ? "," : "") + std::to_string(xs[i]);
    }
    return out;
}

// shortest text that parses back to the same double
std::string real_text(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto& bb = cfg.model.backbone;
    auto& dec = cfg.model.decoder;
    auto& tr = cfg.train;
    if (key == "preset") {
        // resolved before defaults are applied
    } else if (key == "channels") {
        bb.in_channels = dec.out_channels = to_count(key, value);
    } else if (key == "num_blocks") {
        bb.num_blocks = to_count(key, value);
    } else if (key == "D") {
        bb.width = dec.D = to_count(key, value);
    } else if (key == "residual_scale") {
        bb.residual_scale = to_real(key, value);
    } else if (key == "global_skip") {
        bb.global_skip = to_bool(key, value);
    } else if (key == "M") {
        dec.M = to_count(key, value);
    } else if (key == "mlp_hidden") {
        dec.mlp_hidden = to_counts(key, value);
    } else if (key == "rel_offset") {
        dec.rel_offset_input = to_bool(key, value);
    } else if (key == "epochs") {
        tr.epochs = to_count(key, value);
    } else if (key == "batch_images") {
        tr.batch_images = to_count(key, value);
    } else if (key == "points_per_image") {
        tr.points_per_image = to_count(key, value);
    } else if (key == "lr0") {
        tr.lr0 = to_real(key, value);
    } else if (key == "milestones") {
        tr.milestones = to_counts(key, value);
    } else if (key == "gamma") {
        tr.gamma = to_real(key, value);
    } else if (key == "scale_range") {
        const auto parts = split_list(value);
        if (parts.size() != 2) {
            throw ConfigError(key + ": expected 'lo,hi', got '" + value + "'");
        }
        tr.scale_lo = to_real(key, parts[0]);
        tr.scale_hi = to_real(key, parts[1]);
    } else if (key == "crop") {
        tr.crop = to_count(key, value);
    } else if (key == "seed") {
        tr.seed = to_count(key, value);
    } else if (key == "train_dir") {
        cfg.train_dir = value;
    } else if (key == "val_dir") {
        cfg.val_dir = value;
    } else if (key == "checkpoint") {
        cfg.checkpoint = value;
    } else if (key == "output") {
        cfg.output = value;
    } else {
        throw ConfigError(key + ": unknown configuration key");
    }
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& origin) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
        throw ConfigError(origin + ": expected 'key = value', got '" + line + "'");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) {
        throw ConfigError(origin + ": missing key before '='");
    }
    return {key, trim(line.substr(eq + 1))};
}

} // namespace

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw ConfigError("epochs: must be >= 1");
    }
    if (batch_images < 1) {
        throw ConfigError("batch_images: must be >= 1");
    }
    if (points_per_image < 1) {
        throw ConfigError("points_per_image: must be >= 1");
    }
    if (!(lr0 > 0.0)) {
        throw ConfigError("lr0: must be positive");
    }
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] >= epochs || (i > 0 && milestones[i] <= milestones[i - 1])) {
            throw ConfigError("milestones: must be strictly increasing and below epochs");
        }
    }
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ConfigError("gamma: must lie in (0, 1)");
    }
    if (!(scale_lo >= 1.0 && scale_hi >= scale_lo)) {
        throw ConfigError("scale_range: need 1 <= lo <= hi");
    }
    if (crop < 2) {
        throw ConfigError("crop: must be >= 2");
    }
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    cfg.preset = name;
    if (name == "desk") {
        return cfg;
    }
    if (name == "paper") {
        cfg.model.backbone.num_blocks = 16;
        cfg.model.backbone.width = 64;
        cfg.model.decoder.D = 64;
        cfg.model.decoder.M = 6;
        cfg.model.decoder.mlp_hidden = {256, 256, 256, 256};
        cfg.train.epochs = 100;
        cfg.train.batch_images = 16;
        cfg.train.points_per_image = 1500;
        cfg.train.lr0 = 1e-4;
        cfg.train.milestones = {40, 60, 70};
        cfg.train.gamma = 0.3;
        cfg.train.crop = 192;
        return cfg;
    }
    throw ConfigError("preset: unknown preset '" + name + "' (expected desk or paper)");
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        entries.push_back(split_assignment(line, "line " + std::to_string(lineno)));
    }
    for (const auto& o : overrides) {
        entries.push_back(split_assignment(o, "override"));
    }

    std::string preset = "desk";
    for (const auto& [k, v] : entries) {
        if (k == "preset") {
            preset = v;
        }
    }
    RunConfig cfg = preset_config(preset);
    for (const auto& [k, v] : entries) {
        apply(cfg, k, v);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string to_text(const RunConfig& cfg) {
    const auto& bb = cfg.model.backbone;
    const auto& dec = cfg.model.decoder;
    const auto& tr = cfg.train;
    std::ostringstream os;
    os << "preset = " << cfg.preset << '\n'
       << "channels = " << bb.in_channels << '\n'
       << "num_blocks = " << bb.num_blocks << '\n'
       << "D = " << bb.width << '\n'
       << "residual_scale = " << real_text(bb.residual_scale) << '\n'
       << "global_skip = " << (bb.global_skip ? "true" : "false") << '\n'
       << "M = " << dec.M << '\n'
       << "mlp_hidden = " << join(dec.mlp_hidden) << '\n'
       << "rel_offset = " << (dec.rel_offset_input ? "true" : "false") << '\n'
       << "epochs = " << tr.epochs << '\n'
       << "batch_images = " << tr.batch_images << '\n'
       << "points_per_image = " << tr.points_per_image << '\n'
       << "lr0 = " << real_text(tr.lr0) << '\n'
       << "milestones = " << join(tr.milestones) << '\n'
       << "gamma = " << real_text(tr.gamma) << '\n'
       << "scale_range = " << real_text(tr.scale_lo) << ',' << real_text(tr.scale_hi) << '\n'
       << "crop = " << tr.crop << '\n'
       << "seed = " << tr.seed << '\n';
    if (!cfg.train_dir.empty()) {
        os << "train_dir = " << cfg.train_dir << '\n';
    }
    if (!cfg.val_dir.empty()) {
        os << "val_dir = " << cfg.val_dir << '\n';
    }
    os << "checkpoint = " << cfg.checkpoint << '\n';
    if (!cfg.output.empty()) {
        os << "output = " << cfg.output << '\n';
    }
    return os.str();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    double lr = cfg.lr0;
    for (auto m : cfg.milestones) {
        if (m <= epoch) {
            lr *= cfg.gamma;
        }
    }
    return lr;
}

} // namespace owslr
