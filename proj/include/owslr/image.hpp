#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace owslr {

/// Interleaved H x W x C image with values in [0,1], C in {1, 3}.
struct ImageBuffer {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    Eigen::ArrayXd data;

    ImageBuffer() = default;
    ImageBuffer(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0);

    double& at(std::size_t row, std::size_t col, std::size_t ch) {
        return data[static_cast<Eigen::Index>((row * width + col) * channels + ch)];
    }
    double at(std::size_t row, std::size_t col, std::size_t ch) const {
        return data[static_cast<Eigen::Index>((row * width + col) * channels + ch)];
    }

    std::size_t size() const { return height * width * channels; }
};

/// Reads 8-bit gray/RGB PNG or binary PGM (P5) / PPM (P6); values become u/255.
ImageBuffer read_image(const std::filesystem::path& path);

/// Writes PNG, PGM or PPM by extension after clamping to [0,1] and
/// quantizing with round-half-up.
void write_image(const ImageBuffer& img, const std::filesystem::path& path);

/// Clamp then round-half-up to a byte.
unsigned char quantize(double v);

ImageBuffer clamp01(ImageBuffer img);

/// Crops rows [top, top+h) and cols [left, left+w).
ImageBuffer crop(const ImageBuffer& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

/// One output sample of a separable cubic resampler: four source taps.
struct CubicTaps {
    std::array<std::size_t, 4> index;
    std::array<double, 4> weight;
};

/// Catmull-Rom (a = -0.5) cubic convolution kernel.
double cubic_kernel(double t);

/// Taps for resampling an axis of length src_len to dst_len with
/// half-pixel centers and clamped borders.
std::vector<CubicTaps> cubic_taps(std::size_t src_len, std::size_t dst_len);

/// Separable bicubic resize; output clamped to [0,1].
ImageBuffer bicubic_resize(const ImageBuffer& img, std::size_t out_h, std::size_t out_w);

/// PSNR in dB on the [0,1] scale; +infinity when the images are identical.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

} // namespace owslr
