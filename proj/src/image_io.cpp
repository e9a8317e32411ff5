#include "owslr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <png.h>

#include "owslr/error.hpp"

namespace owslr {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

ImageBuffer from_bytes(std::size_t h, std::size_t w, std::size_t c, const unsigned char* bytes) {
    ImageBuffer img(h, w, c);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.data[static_cast<Eigen::Index>(i)] = bytes[i] / 255.0;
    }
    return img;
}

std::vector<unsigned char> to_bytes(const ImageBuffer& img) {
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = quantize(img.data[static_cast<Eigen::Index>(i)]);
    }
    return bytes;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::string& buf, std::size_t& pos, const std::string& path) {
    while (pos < buf.size()) {
        if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') {
                ++pos;
            }
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
    }
    if (start == pos) {
        throw FormatError(path + ": truncated PNM header");
    }
    return buf.substr(start, pos - start);
}

std::size_t pnm_number(const std::string& tok, const std::string& path) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw FormatError(path + ": corrupt PNM header field '" + tok + "'");
    }
    return std::stoul(tok);
}

ImageBuffer read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();
    std::size_t pos = 0;
    const std::string magic = pnm_token(buf, pos, name);
    std::size_t channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError(name + ": unsupported PNM magic '" + magic + "' (expected P5 or P6)");
    }
    const std::size_t w = pnm_number(pnm_token(buf, pos, name), name);
    const std::size_t h = pnm_number(pnm_token(buf, pos, name), name);
    const std::size_t maxval = pnm_number(pnm_token(buf, pos, name), name);
    if (w == 0 || h == 0) {
        throw FormatError(name + ": zero image dimension");
    }
    if (maxval != 255) {
        throw FormatError(name + ": unsupported bit depth (maxval " + std::to_string(maxval) + ", need 255)");
    }
    // exactly one whitespace byte separates the header from the raster
    if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) {
        throw FormatError(name + ": corrupt PNM header");
    }
    ++pos;
    const std::size_t need = w * h * channels;
    if (buf.size() - pos < need) {
        throw FormatError(name + ": truncated pixel data");
    }
    return from_bytes(h, w, channels, reinterpret_cast<const unsigned char*>(buf.data() + pos));
}

void write_pnm(const ImageBuffer& img, const std::filesystem::path& path, bool color) {
    if ((img.channels == 3) != color) {
        throw FormatError(path.string() + ": " + (color ? "PPM needs 3 channels" : "PGM needs 1 channel"));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << (color ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
    const auto bytes = to_bytes(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

ImageBuffer read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw FormatError(path.string() + ": " + image.message);
    }
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw FormatError(path.string() + ": unsupported bit depth (16-bit PNG)");
    }
    if (image.format & PNG_FORMAT_FLAG_ALPHA) {
        png_image_free(&image);
        throw FormatError(path.string() + ": PNG with alpha channel is not supported");
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(path.string() + ": " + msg);
    }
    return from_bytes(image.height, image.width, color ? 3 : 1, bytes.data());
}

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const auto bytes = to_bytes(img);
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot write " + path.string() + ": " + msg);
    }
}

} // namespace

ImageBuffer::ImageBuffer(std::size_t h, std::size_t w, std::size_t c, double fill)
    : height(h), width(w), channels(c), data(Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(h * w * c), fill)) {}

unsigned char quantize(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::floor(clamped * 255.0 + 0.5));
}

ImageBuffer clamp01(ImageBuffer img) {
    img.data = img.data.max(0.0).min(1.0);
    return img;
}

ImageBuffer crop(const ImageBuffer& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0 || top + h > img.height || left + w > img.width) {
        throw std::out_of_range("crop window outside image");
    }
    ImageBuffer out(h, w, img.channels);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t ch = 0; ch < img.channels; ++ch) {
                out.at(r, c, ch) = img.at(top + r, left + c, ch);
            }
        }
    }
    return out;
}

ImageBuffer read_image(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw IoError("cannot read " + path.string() + ": no such file");
    }
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        return read_png(path);
    }
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
        return read_pnm(path);
    }
    throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
}

void write_image(const ImageBuffer& img, const std::filesystem::path& path) {
    if (img.height == 0 || img.width == 0 || (img.channels != 1 && img.channels != 3) ||
        static_cast<std::size_t>(img.data.size()) != img.size()) {
        throw FormatError("write_image: invalid image buffer");
    }
    const std::string ext = lower_extension(path);
    if (ext == ".png") {
        write_png(img, path);
    } else if (ext == ".pgm") {
        write_pnm(img, path, false);
    } else if (ext == ".ppm") {
        write_pnm(img, path, true);
    } else {
        throw FormatError(path.string() + ": unsupported image format '" + ext + "'");
    }
}

} // namespace owslr
