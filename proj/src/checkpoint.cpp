#include "owslr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "owslr/error.hpp"

namespace owslr {

namespace {

constexpr const char* kMagicPrefix = "OWSLR";
constexpr const char* kVersion = "1";

struct Record {
    std::string key;
    Shape shape;
    std::vector<float> values;
};

struct RawCheckpoint {
    std::string config_text;
    std::map<std::string, std::string> state;
    std::vector<Record> records;
};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

void put_record(std::string& out, const std::string& key, const Shape& shape, const Eigen::ArrayXf& values) {
    put_u32(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) {
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(values[i]));
    }
}

class ByteReader {
public:
    explicit ByteReader(std::string buf) : buf_(std::move(buf)) {}

    std::string line() {
        const auto nl = buf_.find('\n', pos_);
        if (nl == std::string::npos) {
            throw FormatError("checkpoint truncated: missing header line");
        }
        std::string out = buf_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        return out;
    }

    std::string bytes(std::size_t n) {
        if (buf_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated: expected " + std::to_string(n) + " more bytes");
        }
        std::string out = buf_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint32_t u32() {
        const auto b = bytes(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        }
        return v;
    }

    bool done() const { return pos_ == buf_.size(); }

private:
    std::string buf_;
    std::size_t pos_ = 0;
};

std::size_t section_size(const std::string& header, const std::string& name) {
    const std::string prefix = name + " ";
    if (header.rfind(prefix, 0) != 0) {
        throw FormatError("checkpoint: expected '" + name + "' section, got '" + header + "'");
    }
    try {
        return std::stoul(header.substr(prefix.size()));
    } catch (const std::exception&) {
        throw FormatError("checkpoint: corrupt '" + name + "' section header");
    }
}

RawCheckpoint read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    ByteReader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));

    const std::string magic = r.line();
    if (magic.rfind(kMagicPrefix, 0) != 0) {
        throw FormatError(path.string() + ": not an OWSLR checkpoint (bad magic)");
    }
    if (magic.substr(std::strlen(kMagicPrefix)) != kVersion) {
        throw FormatError(path.string() + ": unsupported checkpoint version '" +
                          magic.substr(std::strlen(kMagicPrefix)) + "'");
    }

    RawCheckpoint raw;
    raw.config_text = r.bytes(section_size(r.line(), "config"));
    std::istringstream state(r.bytes(section_size(r.line(), "state")));
    for (std::string line; std::getline(state, line);) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw FormatError("checkpoint: corrupt state line '" + line + "'");
        }
        raw.state[line.substr(0, eq)] = line.substr(eq + 3);
    }

    const std::size_t count = section_size(r.line(), "tensors");
    for (std::size_t i = 0; i < count; ++i) {
        Record rec;
        rec.key = r.bytes(r.u32());
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) {
            throw FormatError("checkpoint: tensor '" + rec.key + "' has invalid rank " + std::to_string(rank));
        }
        for (std::uint32_t d = 0; d < rank; ++d) {
            rec.shape.push_back(r.u32());
        }
        const std::size_t n = shape_size(rec.shape);
        rec.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            rec.values[k] = std::bit_cast<float>(r.u32());
        }
        raw.records.push_back(std::move(rec));
    }
    if (!r.done()) {
        throw FormatError("checkpoint: trailing bytes after tensor records");
    }
    return raw;
}

const std::string& state_value(const RawCheckpoint& raw, const std::string& key) {
    const auto it = raw.state.find(key);
    if (it == raw.state.end()) {
        throw FormatError("checkpoint: missing state entry '" + key + "'");
    }
    return it->second;
}

void restore(const RawCheckpoint& raw, Model<float>& model, AdamState<float>* opt) {
    const auto named = model.named_parameters();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < named.size(); ++i) {
        index[named[i].first] = i;
    }
    std::vector<bool> seen(named.size(), false);

    for (const auto& rec : raw.records) {
        std::string key = rec.key;
        int moment = 0; // 0 parameter, 1 first moment, 2 second moment
        if (key.rfind("adam.m.", 0) == 0) {
            moment = 1;
            key = key.substr(7);
        } else if (key.rfind("adam.v.", 0) == 0) {
            moment = 2;
            key = key.substr(7);
        }
        const auto it = index.find(key);
        if (it == index.end()) {
            throw FormatError("checkpoint: unknown parameter key '" + rec.key + "'");
        }
        auto& param = *named[it->second].second;
        if (rec.shape != param.shape()) {
            throw ShapeError("checkpoint: tensor '" + rec.key + "' has shape " + shape_string(rec.shape) +
                             " but the model expects " + shape_string(param.shape()));
        }
        const Eigen::ArrayXf values = Eigen::Map<const Eigen::ArrayXf>(rec.values.data(),
                                                                       static_cast<Eigen::Index>(rec.values.size()));
        if (!values.allFinite()) {
            throw NumericError("checkpoint: tensor '" + rec.key + "' contains non-finite values");
        }
        if (moment == 0) {
            param.data() = values;
            param.clear_grad();
            seen[it->second] = true;
        } else if (opt) {
            (moment == 1 ? opt->m : opt->v)[it->second] = values;
        }
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (!seen[i]) {
            throw FormatError("checkpoint: missing parameter '" + named[i].first + "'");
        }
    }
    if (opt) {
        opt->t = std::stoull(state_value(raw, "adam_t"));
    }
}

} // namespace

void save_checkpoint(const TrainingSession& session, const std::filesystem::path& path) {
    const std::string config = to_text(session.config);
    std::ostringstream state;
    state << "adam_t = " << session.optimizer.t << '\n'
          << "epoch = " << session.epoch << '\n'
          << "rng = " << session.rng << '\n';
    const std::string state_text = state.str();

    const auto named = session.model.named_parameters();
    std::string out;
    out += std::string(kMagicPrefix) + kVersion + "\n";
    out += "config " + std::to_string(config.size()) + "\n" + config;
    out += "state " + std::to_string(state_text.size()) + "\n" + state_text;
    out += "tensors " + std::to_string(3 * named.size()) + "\n";
    for (const auto& [key, t] : named) {
        put_record(out, key, t->shape(), t->data());
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        put_record(out, "adam.m." + named[i].first, named[i].second->shape(), session.optimizer.m.at(i));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        put_record(out, "adam.v." + named[i].first, named[i].second->shape(), session.optimizer.v.at(i));
    }

    // write-then-rename so an interrupted save never clobbers the last good file
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw IoError("cannot write checkpoint " + tmp.string());
        }
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) {
            throw IoError("failed writing checkpoint " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
    }
}

TrainingSession load_checkpoint(const std::filesystem::path& path) {
    const auto raw = read_raw(path);
    TrainingSession session = new_session(parse_config(raw.config_text));
    restore(raw, session.model, &session.optimizer);
    session.epoch = std::stoull(state_value(raw, "epoch"));
    std::istringstream rng(state_value(raw, "rng"));
    rng >> session.rng;
    if (!rng) {
        throw FormatError("checkpoint: corrupt rng state");
    }
    return session;
}

void load_checkpoint_into(const std::filesystem::path& path, Model<float>& model, AdamState<float>* opt) {
    restore(read_raw(path), model, opt);
}

} // namespace owslr
