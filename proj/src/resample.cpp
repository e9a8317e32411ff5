#include <algorithm>
#include <cmath>
#include <limits>

#include "owslr/error.hpp"
#include "owslr/image.hpp"

namespace owslr {

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    const double x = std::abs(t);
    if (x <= 1.0) {
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    }
    return 0.0;
}

std::vector<CubicTaps> cubic_taps(std::size_t src_len, std::size_t dst_len) {
    if (src_len == 0 || dst_len == 0) {
        throw ShapeError("cubic_taps: lengths must be >= 1");
    }
    const double ratio = static_cast<double>(src_len) / static_cast<double>(dst_len);
    const auto last = static_cast<std::ptrdiff_t>(src_len) - 1;
    std::vector<CubicTaps> taps(dst_len);
    for (std::size_t i = 0; i < dst_len; ++i) {
        const double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        const double base = std::floor(src);
        const double frac = src - base;
        for (int k = 0; k < 4; ++k) {
            const auto idx = static_cast<std::ptrdiff_t>(base) - 1 + k;
            taps[i].index[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
            taps[i].weight[k] = cubic_kernel(frac - (k - 1));
        }
    }
    return taps;
}

ImageBuffer bicubic_resize(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) {
        throw ShapeError("bicubic_resize: output dimensions must be >= 1");
    }
    const auto rows = cubic_taps(img.height, out_h);
    const auto cols = cubic_taps(img.width, out_w);
    const std::size_t c = img.channels;

    // horizontal pass, then vertical
    ImageBuffer tmp(img.height, out_w, c);
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t x = 0; x < out_w; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += cols[x].weight[k] * img.at(r, cols[x].index[k], ch);
                }
                tmp.at(r, x, ch) = acc;
            }
        }
    }
    ImageBuffer out(out_h, out_w, c);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) {
                    acc += rows[y].weight[k] * tmp.at(rows[y].index[k], x, ch);
                }
                out.at(y, x, ch) = acc;
            }
        }
    }
    return clamp01(std::move(out));
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw ShapeError("psnr: image dimensions differ");
    }
    const double mse = (a.data - b.data).square().mean();
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace owslr
