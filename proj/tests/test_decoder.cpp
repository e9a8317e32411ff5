#include <doctest.h>

#include <random>

#include "owslr/decoder.hpp"
#include "test_support.hpp"

using namespace owslr;

namespace {

DecoderConfig small_config(std::size_t M, std::size_t D, bool rel = false) {
    DecoderConfig c;
    c.M = M;
    c.D = D;
    c.mlp_hidden = {8, 6};
    c.out_channels = 3;
    c.rel_offset_input = rel;
    return c;
}

template <typename Scalar>
TensorPtr<Scalar> random_tensor(const Shape& s, std::uint64_t seed, bool grad = false) {
    return init_tensor<Scalar>(s, Uniform{seed, -1.0, 1.0}, grad);
}

// Reference corner sum written directly with loops.
std::vector<double> ref_shrink(const std::vector<double>& grid, std::size_t side, std::size_t depth,
                               const std::array<std::vector<double>, 4>& w) {
    const std::size_t k = side - 1;
    std::vector<double> out(k * k * depth, 0.0);
    const std::array<std::pair<std::size_t, std::size_t>, 4> origin{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t q = 0; q < k; ++q) {
                for (std::size_t d = 0; d < depth; ++d) {
                    const double v = grid[((r + origin[c].first) * side + q + origin[c].second) * depth + d];
                    out[(r * k + q) * depth + d] += v * w[c][(r * k + q) * depth + d];
                }
            }
        }
    }
    return out;
}

std::vector<double> values(const Tensor<double>& t) {
    return {t.data().begin(), t.data().end()};
}

} // namespace

TEST_CASE("window sizes shrink from M-1 to M/2") {
    CHECK(small_config(6, 2).window_sizes() == std::vector<std::size_t>{5, 4, 3});
    CHECK(small_config(4, 2).window_sizes() == std::vector<std::size_t>{3, 2});
    CHECK(small_config(8, 2).window_sizes() == std::vector<std::size_t>{7, 6, 5, 4});
    CHECK_THROWS_WITH_AS(small_config(5, 2).validate(), doctest::Contains("M"), ConfigError);
    CHECK_THROWS_AS(small_config(2, 2).validate(), ConfigError);
}

TEST_CASE("shrink of a 2x2 grid with quarter weights is its mean") {
    Graph<double> g(false);
    auto grid = make_tensor<double>({2, 2, 1}, {1, 2, 3, 4});
    std::array<TensorPtr<double>, 4> w;
    for (auto& t : w) {
        t = init_tensor<double>({1, 1, 1}, Constant{0.25});
    }
    CHECK(shrink_step(g, grid, w)->item() == 2.5);
}

TEST_CASE("shrink matches a loop reference, single and batched") {
    const std::size_t side = 5, depth = 3, k = 4;
    std::array<TensorPtr<double>, 4> w;
    std::array<std::vector<double>, 4> wv;
    for (std::size_t c = 0; c < 4; ++c) {
        w[c] = random_tensor<double>({k, k, depth}, 10 + c);
        wv[c] = values(*w[c]);
    }
    Graph<double> g(false);
    auto single = random_tensor<double>({side, side, depth}, 1);
    const auto out = shrink_step(g, single, w);
    CHECK(out->shape() == Shape{k, k, depth});
    const auto ref = ref_shrink(values(*single), side, depth, wv);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK((*out)[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }

    auto batch = random_tensor<double>({3, side, side, depth}, 2);
    const auto bout = shrink_step(g, batch, w);
    REQUIRE(bout->shape() == Shape{3, k, k, depth});
    const auto all = values(*batch);
    const std::size_t per = side * side * depth;
    for (std::size_t b = 0; b < 3; ++b) {
        const auto r = ref_shrink({all.begin() + b * per, all.begin() + (b + 1) * per}, side, depth, wv);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK((*bout)[b * r.size() + i] == doctest::Approx(r[i]).epsilon(1e-14));
        }
    }

    auto wrong = random_tensor<double>({side + 1, side + 1, depth}, 3);
    CHECK_THROWS_AS(shrink_step(g, wrong, w), ShapeError);
}

TEST_CASE("window chain shapes and constant preservation") {
    const auto cfg = small_config(6, 4);
    const auto w = init_decoder<double>(cfg, 7);
    REQUIRE(w.windows.size() == 3);
    Graph<double> g(false);
    auto region = init_tensor<double>({6, 6, 4}, Constant{0.7});
    auto x = region;
    std::size_t side = 6;
    for (const auto& level : w.windows) {
        x = shrink_step(g, x, level.corners);
        --side;
        CHECK(x->shape() == Shape{side, side, 4});
    }
    CHECK(side == 3);
    CHECK(((x->data() - 0.7).abs() <= 1e-12).all());
    CHECK(run_windows(g, region, w)->shape() == Shape{3, 3, 4});
}

TEST_CASE("indicator weights select a corner exactly") {
    const auto cfg = small_config(6, 2);
    auto w = init_decoder<double>(cfg, 7);
    for (auto& level : w.windows) {
        level.corners[0]->data().setOnes();
        for (std::size_t c = 1; c < 4; ++c) {
            level.corners[c]->data().setZero();
        }
    }
    Graph<double> g(false);
    auto region = random_tensor<double>({6, 6, 2}, 4);
    const auto out = run_windows(g, region, w);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t d = 0; d < 2; ++d) {
                CHECK((*out)[(r * 3 + c) * 2 + d] == (*region)[(r * 6 + c) * 2 + d]);
            }
        }
    }
}

TEST_CASE("final window placement") {
    CHECK(final_window_origin(3, 0.3) == 1);
    CHECK(final_window_origin(3, 0.0) == 0); // tie goes to the top-left window
    CHECK(final_window_origin(3, -0.4) == 0);
    CHECK(final_window_origin(2, 0.5) == 0);
    CHECK(final_window_origin(4, 0.0) == 1);
    CHECK(final_window_origin(4, 0.5) == 1); // equidistant from origins 1 and 2
    CHECK(final_window_origin(4, 0.6) == 2);
    CHECK(final_window_origin(4, -0.5) == 0);

    Graph<double> g(false);
    std::vector<double> v(9);
    for (std::size_t i = 0; i < 9; ++i) {
        v[i] = static_cast<double>(i);
    }
    auto grid = make_tensor<double>({1, 3, 3, 1}, v);
    const std::vector<std::array<double, 2>> offs{{0.3, 0.3}};
    const auto sel = select_final_window(g, grid, std::span<const std::array<double, 2>>(offs));
    CHECK(values(*sel) == std::vector<double>{4, 5, 7, 8});

    const std::vector<std::array<double, 2>> zero{{0.0, 0.0}};
    CHECK(values(*select_final_window(g, grid, std::span<const std::array<double, 2>>(zero))) ==
          std::vector<double>{0, 1, 3, 4});
}

TEST_CASE("averaging readout returns the constant") {
    // one dense layer averaging the four cells of channel 0 reproduces a
    // constant field through the whole decoder
    DecoderConfig cfg = small_config(6, 2);
    cfg.mlp_hidden = {};
    cfg.out_channels = 1;
    auto w = init_decoder<double>(cfg, 1);
    REQUIRE(w.mlp.size() == 1);
    w.mlp[0].weight->data().setZero();
    for (std::size_t cell = 0; cell < 4; ++cell) {
        w.mlp[0].weight->data()[static_cast<Eigen::Index>(cell * 2)] = 0.25;
    }
    w.mlp[0].bias->data().setZero();
    Graph<double> g(false);
    SemiLocalRegion<double> region{init_tensor<double>({6, 6, 2}, Constant{0.42}), {0.1, 0.1, 0.2, -0.3}};
    const auto out = decode(g, region, w);
    REQUIRE(out->shape() == Shape{1});
    CHECK(out->item() == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("decoder parameter count") {
    const auto cfg = small_config(6, 4, true);
    const auto w = init_decoder<float>(cfg, 3);
    std::size_t n = 0;
    for (const auto& [name, t] : w.named_parameters()) {
        n += t->size();
    }
    const std::size_t windows = 4 * 4 * (25 + 16 + 9);
    const std::size_t mlp = (4 * 4 + 2) * 8 + 8 + 8 * 6 + 6 + 6 * 3 + 3;
    CHECK(n == windows + mlp);
    CHECK(w.named_parameters().front().first == "owd.win.5.tl");
    CHECK(w.named_parameters().back().first == "owd.mlp.2.b");
    for (const auto& level : w.windows) {
        for (const auto& c : level.corners) {
            CHECK((c->data() == 0.25f).all());
        }
    }
}

TEST_CASE("batched decode equals per-region decode") {
    const auto cfg = small_config(4, 3, true);
    const auto w = init_decoder<double>(cfg, 9);
    Graph<double> g(false);
    auto values4 = random_tensor<double>({2, 4, 4, 3}, 5);
    RegionBatch<double> batch{values4, {{0.2, -0.1}, {-0.4, 0.3}}};
    const auto out = decode(g, batch, w);
    REQUIRE(out->shape() == Shape{2, 3});
    for (std::size_t b = 0; b < 2; ++b) {
        std::vector<double> v(values4->data().begin() + b * 48, values4->data().begin() + (b + 1) * 48);
        SemiLocalRegion<double> one{make_tensor<double>({4, 4, 3}, v), {0.25, 0.25, batch.rel_offsets[b][0],
                                                                         batch.rel_offsets[b][1]}};
        const auto single = decode(g, one, w);
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK((*single)[c] == doctest::Approx((*out)[b * 3 + c]).epsilon(1e-14));
        }
    }
}

TEST_CASE("decode gradients match finite differences in f64") {
    for (std::size_t M : {4u, 6u}) {
        const auto cfg = small_config(M, 2, M == 6);
        auto w = init_decoder<double>(cfg, 21 + M);
        // perturb corner weights away from the symmetric start
        std::uint64_t s = 100;
        for (auto& level : w.windows) {
            for (auto& c : level.corners) {
                c->data() += init_tensor<double>(c->shape(), Uniform{s++, -0.1, 0.1})->data();
            }
        }
        auto region = random_tensor<double>({3, M, M, 2}, 31, true);
        auto target = random_tensor<double>({3, 3}, 32);
        std::vector<TensorPtr<double>> inputs{region};
        for (const auto& [name, t] : w.named_parameters()) {
            inputs.push_back(t);
        }
        const std::vector<std::array<double, 2>> offs{{0.1, -0.2}, {0.45, 0.3}, {-0.3, -0.45}};
        const double err = testing::fd_max_rel_error<double>(
            [&](Graph<double>& g) { return l1_loss(g, decode(g, RegionBatch<double>{region, offs}, w), target); },
            inputs, 1e-6);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("f32 decode gradients agree with f64") {
    const auto cfg = small_config(4, 3, true);
    const auto w64 = init_decoder<double>(cfg, 41);
    const auto w32 = init_decoder<float>(cfg, 41);
    auto r64 = random_tensor<double>({4, 4, 4, 3}, 42, true);
    auto r32 = cast_tensor<float>(*r64, true);
    auto t64 = random_tensor<double>({4, 3}, 43);
    auto t32 = cast_tensor<float>(*t64, false);
    const std::vector<std::array<double, 2>> offs{{0.1, 0.2}, {-0.2, 0.4}, {0.0, 0.0}, {0.3, -0.1}};

    Graph<double> g64;
    g64.backward(l1_loss(g64, decode(g64, RegionBatch<double>{r64, offs}, w64), t64));
    Graph<float> g32;
    g32.backward(l1_loss(g32, decode(g32, RegionBatch<float>{r32, offs}, w32), t32));

    auto p64 = w64.named_parameters();
    auto p32 = w32.named_parameters();
    p64.emplace_back("region", r64);
    p32.emplace_back("region", r32);
    double worst = 0.0;
    for (std::size_t i = 0; i < p64.size(); ++i) {
        const auto& a = p64[i].second->grad();
        const auto b = p32[i].second->grad().cast<double>();
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            worst = std::max(worst, std::abs(a[j] - b[j]) / std::max({std::abs(a[j]), std::abs(b[j]), 1e-3}));
        }
    }
    CHECK(worst <= 1e-4);
}
