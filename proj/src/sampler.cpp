#include "owslr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace owslr {

namespace {

// Snaps values within rounding noise of an integer onto it, so that points
// lying exactly on a cell boundary resolve by the tie rule rather than by
// the last bit of a floating-point product.
double snap(double u) {
    const double r = std::round(u);
    return std::abs(u - r) < 1e-9 ? r : u;
}

} // namespace

CellGeometry CellGeometry::for_map(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("feature map must be at least 1x1");
    }
    return {1.0 / static_cast<double>(cols), 1.0 / static_cast<double>(rows), 0.0, 0.0};
}

NormCoord hr_to_norm(std::size_t row, std::size_t col, std::size_t out_h, std::size_t out_w) {
    if (row >= out_h || col >= out_w) {
        throw std::out_of_range("hr_to_norm: pixel (" + std::to_string(row) + "," + std::to_string(col) +
                                ") outside " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    return {(static_cast<double>(col) + 0.5) / static_cast<double>(out_w),
            (static_cast<double>(row) + 0.5) / static_cast<double>(out_h)};
}

std::vector<double> window_offsets(std::size_t M) {
    if (M < 2 || M % 2 != 0) {
        throw ShapeError("window size M must be even and >= 2, got " + std::to_string(M));
    }
    std::vector<double> offs(M);
    for (std::size_t t = 0; t < M; ++t) {
        offs[t] = -static_cast<double>(M) / 2.0 + 0.5 + static_cast<double>(t);
    }
    return offs;
}

OffsetGrid offset_grid(NormCoord center, std::size_t M, const CellGeometry& geom) {
    if (!std::isfinite(center.x) || !std::isfinite(center.y)) {
        throw NumericError("offset_grid: non-finite center");
    }
    const auto offs = window_offsets(M);
    OffsetGrid grid{M, center, {}};
    grid.points.reserve(M * M);
    for (std::size_t r = 0; r < M; ++r) {
        for (std::size_t c = 0; c < M; ++c) {
            grid.points.push_back({center.x + geom.psi_x * offs[c], center.y + geom.psi_y * offs[r]});
        }
    }
    return grid;
}

std::size_t nearest_cell(double q, std::size_t n) {
    const double u = std::floor(snap(q * static_cast<double>(n)));
    if (u < 0.0) {
        return 0;
    }
    return std::min(static_cast<std::size_t>(u), n - 1);
}

std::array<double, 2> relative_offset(NormCoord q, std::size_t rows, std::size_t cols) {
    const double ux = snap(q.x * static_cast<double>(cols));
    const double uy = snap(q.y * static_cast<double>(rows));
    const double dx = ux - (static_cast<double>(nearest_cell(q.x, cols)) + 0.5);
    const double dy = uy - (static_cast<double>(nearest_cell(q.y, rows)) + 0.5);
    return {std::clamp(dx, -0.5, 0.5), std::clamp(dy, -0.5, 0.5)};
}

std::vector<std::size_t> lookup_indices(const OffsetGrid& grid, std::size_t rows, std::size_t cols) {
    std::vector<std::size_t> idx;
    idx.reserve(grid.points.size());
    for (const auto& p : grid.points) {
        idx.push_back(nearest_cell(p.y, rows) * cols + nearest_cell(p.x, cols));
    }
    return idx;
}

} // namespace owslr
