#pragma once

#include <array>
#include <span>
#include <vector>

#include "owslr/backbone.hpp"
#include "owslr/ops.hpp"

namespace owslr {

/// Normalized image-plane coordinate: x along width, y along height, both in
/// [0,1] with pixel/cell p centered at (p + 0.5) / extent.
struct NormCoord {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const NormCoord&, const NormCoord&) = default;
};

/// Latent cell size in normalized units plus the query's position relative
/// to the center of the cell it falls in, in cell units.
struct CellGeometry {
    double psi_x = 0.0; // 1 / cols
    double psi_y = 0.0; // 1 / rows
    double dx = 0.0;
    double dy = 0.0;

    static CellGeometry for_map(std::size_t rows, std::size_t cols);
};

/// M x M sample points around a center, stored row-major (row index walks y).
struct OffsetGrid {
    std::size_t M = 0;
    NormCoord center;
    std::vector<NormCoord> points;

    const NormCoord& at(std::size_t row, std::size_t col) const { return points[row * M + col]; }
};

NormCoord hr_to_norm(std::size_t row, std::size_t col, std::size_t out_h, std::size_t out_w);

/// The M symmetric half-integer offsets -M/2+0.5, ..., M/2-0.5.
std::vector<double> window_offsets(std::size_t M);

OffsetGrid offset_grid(NormCoord center, std::size_t M, const CellGeometry& geom);

/// Index of the cell whose center is nearest to q along an axis of n cells:
/// clamp(floor(q * n), 0, n - 1). Exact boundaries go to the larger index.
std::size_t nearest_cell(double q, std::size_t n);

/// Query offset from its nearest cell center, in cell units.
std::array<double, 2> relative_offset(NormCoord q, std::size_t rows, std::size_t cols);

/// Flat (row * cols + col) cell index for every grid point.
std::vector<std::size_t> lookup_indices(const OffsetGrid& grid, std::size_t rows, std::size_t cols);

template <typename Scalar>
struct SemiLocalRegion {
    TensorPtr<Scalar> values; // [M,M,D]
    CellGeometry geometry;
};

/// A batch of regions gathered from one feature map.
template <typename Scalar>
struct RegionBatch {
    TensorPtr<Scalar> values; // [N,M,M,D]
    std::vector<std::array<double, 2>> rel_offsets;

    std::size_t count() const { return rel_offsets.size(); }
};

template <typename Scalar>
SemiLocalRegion<Scalar> nearest_lookup(Graph<Scalar>& g, const OffsetGrid& grid, const FeatureMap<Scalar>& psi) {
    const auto idx = lookup_indices(grid, psi.rows, psi.cols);
    auto geom = CellGeometry::for_map(psi.rows, psi.cols);
    const auto rel = relative_offset(grid.center, psi.rows, psi.cols);
    geom.dx = rel[0];
    geom.dy = rel[1];
    return {gather_rows(g, psi.values, idx, {grid.M, grid.M, psi.depth}), geom};
}

template <typename Scalar>
SemiLocalRegion<Scalar> extract_region(Graph<Scalar>& g, NormCoord center, std::size_t M,
                                       const FeatureMap<Scalar>& psi) {
    return nearest_lookup(g, offset_grid(center, M, CellGeometry::for_map(psi.rows, psi.cols)), psi);
}

/// Batched extract_region: one gather for all query centers.
template <typename Scalar>
RegionBatch<Scalar> extract_regions(Graph<Scalar>& g, std::span<const NormCoord> centers, std::size_t M,
                                    const FeatureMap<Scalar>& psi) {
    if (centers.empty()) {
        throw ShapeError("extract_regions: no query points");
    }
    const auto geom = CellGeometry::for_map(psi.rows, psi.cols);
    std::vector<std::size_t> idx;
    idx.reserve(centers.size() * M * M);
    RegionBatch<Scalar> batch;
    batch.rel_offsets.reserve(centers.size());
    for (const auto& c : centers) {
        const auto cell = lookup_indices(offset_grid(c, M, geom), psi.rows, psi.cols);
        idx.insert(idx.end(), cell.begin(), cell.end());
        batch.rel_offsets.push_back(relative_offset(c, psi.rows, psi.cols));
    }
    batch.values = gather_rows(g, psi.values, std::move(idx), {centers.size(), M, M, psi.depth});
    return batch;
}

} // namespace owslr
