#include <doctest.h>

#include <random>

#include "owslr/sampler.hpp"
#include "test_support.hpp"

using namespace owslr;

namespace {

// Brute-force nearest cell center with ties resolved toward the larger index.
std::size_t argmin_cell(double q, std::size_t n) {
    std::size_t best = 0;
    double best_d = std::abs(q - 0.5 / n);
    for (std::size_t p = 1; p < n; ++p) {
        const double d = std::abs(q - (p + 0.5) / n);
        if (d <= best_d) {
            best = p;
            best_d = d;
        }
    }
    return best;
}

FeatureMap<double> counting_map(std::size_t rows, std::size_t cols, std::size_t depth) {
    std::vector<double> v(rows * cols * depth);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<double>(i / depth); // every channel holds the flat cell index
    }
    return {rows, cols, depth, make_tensor<double>({rows, cols, depth}, std::move(v), true)};
}

} // namespace

TEST_CASE("HR pixel centers in normalized coordinates") {
    const auto a = hr_to_norm(0, 0, 4, 8);
    CHECK(a.x == 0.0625);
    CHECK(a.y == 0.125);
    const auto b = hr_to_norm(3, 7, 4, 8);
    CHECK(b.x == 0.9375);
    CHECK(b.y == 0.875);
    CHECK_THROWS_AS(hr_to_norm(4, 0, 4, 8), std::out_of_range);
}

TEST_CASE("window offsets are symmetric half-integers") {
    CHECK(window_offsets(2) == std::vector<double>{-0.5, 0.5});
    CHECK(window_offsets(6) == std::vector<double>{-2.5, -1.5, -0.5, 0.5, 1.5, 2.5});
    CHECK_THROWS_AS(window_offsets(5), ShapeError);
    CHECK_THROWS_AS(window_offsets(0), ShapeError);
}

TEST_CASE("offset grid geometry") {
    const auto geom = CellGeometry::for_map(4, 4);
    CHECK(geom.psi_x == 0.25);
    CHECK(geom.psi_y == 0.25);

    const auto g2 = offset_grid({0.5, 0.5}, 2, geom);
    REQUIRE(g2.points.size() == 4);
    CHECK(g2.at(0, 0) == NormCoord{0.375, 0.375});
    CHECK(g2.at(0, 1) == NormCoord{0.625, 0.375});
    CHECK(g2.at(1, 0) == NormCoord{0.375, 0.625});
    CHECK(g2.at(1, 1) == NormCoord{0.625, 0.625});

    const auto rect = CellGeometry::for_map(5, 10);
    const auto g6 = offset_grid({0.4, 0.3}, 6, rect);
    CHECK(g6.at(5, 5).x == doctest::Approx(0.4 + 2.5 * 0.1));
    CHECK(g6.at(5, 5).y == doctest::Approx(0.3 + 2.5 * 0.2));
    CHECK(g6.at(0, 0).x == doctest::Approx(0.4 - 2.5 * 0.1));
    CHECK(g6.at(0, 0).y == doctest::Approx(0.3 - 2.5 * 0.2));
}

TEST_CASE("shifting the center shifts every grid point") {
    const auto geom = CellGeometry::for_map(7, 9);
    const auto a = offset_grid({0.31, 0.62}, 4, geom);
    const auto b = offset_grid({0.31 + 0.05, 0.62 - 0.02}, 4, geom);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(b.points[i].x - a.points[i].x == doctest::Approx(0.05));
        CHECK(b.points[i].y - a.points[i].y == doctest::Approx(-0.02));
    }
}

TEST_CASE("nearest cell lookup") {
    CHECK(nearest_cell(0.3, 2) == 0);
    CHECK(nearest_cell(0.5, 2) == 1); // equidistant from both centers
    CHECK(nearest_cell(-0.4, 5) == 0);
    CHECK(nearest_cell(1.7, 5) == 4);
    CHECK(nearest_cell(1.0, 5) == 4);

    const auto geom = CellGeometry::for_map(2, 2);
    const auto grid = offset_grid({0.3, 0.3}, 2, geom);
    // points at 0.05 and 0.55 on both axes
    CHECK(lookup_indices(grid, 2, 2) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("floor rule agrees with brute-force argmin") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    std::uniform_real_distribution<double> u(-0.3, 1.3);
    for (int m = 0; m < 10; ++m) {
        const std::size_t rows = dim(rng), cols = dim(rng);
        for (int q = 0; q < 1000; ++q) {
            const NormCoord p{u(rng), u(rng)};
            const OffsetGrid single{1, p, {p}};
            const auto idx = lookup_indices(single, rows, cols);
            REQUIRE(idx[0] == argmin_cell(p.y, rows) * cols + argmin_cell(p.x, cols));
        }
    }
}

TEST_CASE("cell-centered query on an 8x8 map reads an exact block") {
    const auto geom = CellGeometry::for_map(8, 8);
    // center of cell (3, 4); the half-cell points fall on boundaries and
    // resolve toward the larger index
    const auto grid = offset_grid({(4 + 0.5) / 8, (3 + 0.5) / 8}, 4, geom);
    const auto idx = lookup_indices(grid, 8, 8);
    std::vector<std::size_t> expect;
    for (std::size_t r = 2; r < 6; ++r) {
        for (std::size_t c = 3; c < 7; ++c) {
            expect.push_back(r * 8 + c);
        }
    }
    CHECK(idx == expect);

    // off-center query strictly inside the cell
    const auto g2 = offset_grid({(4 + 0.3) / 8, (3 + 0.7) / 8}, 4, geom);
    const auto idx2 = lookup_indices(g2, 8, 8);
    CHECK(idx2.front() == 2 * 8 + 2);
    CHECK(idx2.back() == 5 * 8 + 5);
}

TEST_CASE("grid points beyond the border clamp to edge cells") {
    const auto geom = CellGeometry::for_map(3, 3);
    const auto grid = offset_grid({0.05, 0.95}, 6, geom);
    for (auto i : lookup_indices(grid, 3, 3)) {
        CHECK(i < 9);
    }
    const auto idx = lookup_indices(grid, 3, 3);
    CHECK(idx.front() == 0);
    CHECK(idx.back() == 2 * 3 + 2);
}

TEST_CASE("relative offset stays within half a cell") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    for (int i = 0; i < 2000; ++i) {
        const auto r = relative_offset({u(rng), u(rng)}, 5, 7);
        CHECK(r[0] >= -0.5);
        CHECK(r[0] <= 0.5);
        CHECK(r[1] >= -0.5);
        CHECK(r[1] <= 0.5);
    }
    const auto c = relative_offset({(2 + 0.5) / 7, (1 + 0.75) / 5}, 5, 7);
    CHECK(c[0] == doctest::Approx(0.0));
    CHECK(c[1] == doctest::Approx(0.25));
}

TEST_CASE("region values come from the looked-up cells") {
    const auto psi = counting_map(5, 6, 3);
    Graph<double> g(false);
    const NormCoord q{0.41, 0.63};
    const auto region = extract_region(g, q, 4, psi);
    const auto idx = lookup_indices(offset_grid(q, 4, CellGeometry::for_map(5, 6)), 5, 6);
    REQUIRE(region.values->shape() == Shape{4, 4, 3});
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t d = 0; d < 3; ++d) {
            CHECK((*region.values)[i * 3 + d] == static_cast<double>(idx[i]));
        }
    }
    const auto rel = relative_offset(q, 5, 6);
    CHECK(region.geometry.dx == rel[0]);
    CHECK(region.geometry.dy == rel[1]);
}

TEST_CASE("region gradient scatters back with multiplicity") {
    const auto psi = counting_map(3, 4, 2);
    const std::vector<NormCoord> qs{{0.1, 0.1}, {0.5, 0.5}, {0.9, 0.2}};
    Graph<double> g;
    const auto batch = extract_regions(g, std::span<const NormCoord>(qs), 4, psi);
    CHECK(batch.count() == 3);
    g.backward(sum(g, batch.values));

    std::vector<double> counts(12, 0.0);
    for (const auto& q : qs) {
        for (auto i : lookup_indices(offset_grid(q, 4, CellGeometry::for_map(3, 4)), 3, 4)) {
            counts[i] += 1.0;
        }
    }
    for (std::size_t cell = 0; cell < 12; ++cell) {
        for (std::size_t d = 0; d < 2; ++d) {
            CHECK(psi.values->grad()[static_cast<Eigen::Index>(cell * 2 + d)] == counts[cell]);
        }
    }
}

TEST_CASE("sampler rejects bad inputs") {
    const auto psi = counting_map(2, 2, 1);
    Graph<double> g(false);
    CHECK_THROWS_AS(extract_region(g, {0.5, 0.5}, 3, psi), ShapeError);
    CHECK_THROWS_AS(extract_regions(g, std::span<const NormCoord>(), 4, psi), ShapeError);
    CHECK_THROWS_AS(CellGeometry::for_map(0, 3), ShapeError);
}
