#include "owslr/gradcheck.hpp"

#include <random>

#include "owslr/model.hpp"
#include "owslr/ops.hpp"

namespace owslr {

double max_gradient_error(const LossFn& loss, const std::vector<TensorPtr<double>>& inputs, double h) {
    for (const auto& t : inputs) {
        t->clear_grad();
    }
    {
        Graph<double> g;
        g.backward(loss(g));
    }
    std::vector<Eigen::ArrayXd> analytic;
    for (const auto& t : inputs) {
        analytic.push_back(t->has_grad() ? t->grad() : Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(t->size())));
        t->clear_grad();
    }

    auto eval = [&] {
        Graph<double> g(false);
        return loss(g)->item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& data = inputs[k]->data();
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + h;
            const double up = eval();
            data[i] = saved - h;
            const double down = eval();
            data[i] = saved;
            worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

namespace {

using T = TensorPtr<double>;

class Cases {
public:
    explicit Cases(std::uint64_t seed) : rng_(seed) {}

    std::size_t dim(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }

    T tensor(const Shape& shape, bool grad = true) {
        return init_tensor<double>(shape, Uniform{rng_(), -1.0, 1.0}, grad);
    }

    std::uint64_t seed() { return rng_(); }

private:
    std::mt19937_64 rng_;
};

// Scalar probe: sum(out * r) with a fixed random r of matching shape, so
// every output entry contributes a distinct weight.
T probe(Graph<double>& g, const T& out, const T& r) {
    return sum(g, mul(g, out, r));
}

GradCheckResult check(const std::string& name, std::size_t instances, double tol, Cases& cases,
                      const std::function<double(Cases&)>& one) {
    GradCheckResult res{name, instances, 0.0, tol};
    for (std::size_t i = 0; i < instances; ++i) {
        res.max_rel_error = std::max(res.max_rel_error, one(cases));
    }
    return res;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t instances) {
    constexpr double op_tol = 1e-5;
    constexpr double decode_tol = 1e-6;
    Cases cases(seed);
    std::vector<GradCheckResult> out;

    out.push_back(check("add", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 4), c.dim(1, 4)};
        auto a = c.tensor(s), b = c.tensor(s), r = c.tensor(s, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, add(g, a, b), r); }, {a, b});
    }));
    out.push_back(check("mul", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 4), c.dim(1, 4)};
        auto a = c.tensor(s), b = c.tensor(s), r = c.tensor(s, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, mul(g, a, b), r); }, {a, b});
    }));
    out.push_back(check("relu", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 4), c.dim(1, 4)};
        auto a = c.tensor(s), r = c.tensor(s, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, relu(g, a), r); }, {a});
    }));
    out.push_back(check("scale", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 4), c.dim(1, 4)};
        auto a = c.tensor(s), r = c.tensor(s, false);
        const double f = static_cast<double>(c.dim(1, 9)) / 4.0;
        return max_gradient_error([&](Graph<double>& g) { return probe(g, scale(g, a, f), r); }, {a});
    }));
    out.push_back(check("matmul", instances, op_tol, cases, [](Cases& c) {
        const std::size_t m = c.dim(1, 4), k = c.dim(1, 5), n = c.dim(1, 3);
        auto a = c.tensor({m, k}), b = c.tensor({k, n}), r = c.tensor({m, n}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, matmul(g, a, b), r); }, {a, b});
    }));
    out.push_back(check("conv2d", instances, op_tol, cases, [](Cases& c) {
        const std::size_t h = c.dim(3, 5), w = c.dim(3, 5), cin = c.dim(1, 3), cout = c.dim(1, 3);
        const std::size_t k = c.dim(0, 1) ? 3 : 1;
        auto x = c.tensor({h, w, cin}), kernel = c.tensor({k, k, cin, cout}), r = c.tensor({h, w, cout}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, conv2d(g, x, kernel), r); }, {x, kernel});
    }));
    out.push_back(check("bias_add", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 4), c.dim(1, 4), c.dim(1, 3)};
        auto x = c.tensor(s), b = c.tensor({s[2]}), r = c.tensor(s, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, bias_add(g, x, b), r); }, {x, b});
    }));
    out.push_back(check("reshape", instances, op_tol, cases, [](Cases& c) {
        const std::size_t p = c.dim(1, 4), q = c.dim(1, 4);
        auto x = c.tensor({p, q}), r = c.tensor({q * p}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, reshape(g, x, {q * p}), r); }, {x});
    }));
    out.push_back(check("gather_rows", instances, op_tol, cases, [](Cases& c) {
        const std::size_t rows = c.dim(1, 6), width = c.dim(1, 3), picks = c.dim(1, 10);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < picks; ++i) {
            idx.push_back(c.dim(0, rows - 1));
        }
        auto x = c.tensor({rows, width}), r = c.tensor({picks, width}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, gather_rows(g, x, idx, {picks, width}), r); },
                                  {x});
    }));
    out.push_back(check("tile", instances, op_tol, cases, [](Cases& c) {
        const std::size_t n = c.dim(1, 4);
        const Shape s{c.dim(1, 3), c.dim(1, 3)};
        auto x = c.tensor(s), r = c.tensor({n, s[0], s[1]}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, tile(g, x, n), r); }, {x});
    }));
    out.push_back(check("concat_columns", instances, op_tol, cases, [](Cases& c) {
        const std::size_t n = c.dim(1, 4), p = c.dim(1, 3), q = c.dim(1, 3);
        auto a = c.tensor({n, p}), b = c.tensor({n, q}), r = c.tensor({n, p + q}, false);
        return max_gradient_error([&](Graph<double>& g) { return probe(g, concat_columns(g, a, b), r); }, {a, b});
    }));
    out.push_back(check("sum", instances, op_tol, cases, [](Cases& c) {
        auto a = c.tensor({c.dim(1, 5), c.dim(1, 5)}), w = c.tensor(a->shape(), false);
        return max_gradient_error([&](Graph<double>& g) { return sum(g, relu(g, mul(g, a, w))); }, {a});
    }));
    out.push_back(check("mean", instances, op_tol, cases, [](Cases& c) {
        auto a = c.tensor({c.dim(1, 5), c.dim(1, 5)}), w = c.tensor(a->shape(), false);
        return max_gradient_error([&](Graph<double>& g) { return mean(g, mul(g, a, w)); }, {a});
    }));
    out.push_back(check("l1_loss", instances, op_tol, cases, [](Cases& c) {
        const Shape s{c.dim(1, 5), c.dim(1, 5)};
        auto pred = c.tensor(s), target = c.tensor(s, false);
        return max_gradient_error([&](Graph<double>& g) { return l1_loss(g, pred, target); }, {pred});
    }));
    out.push_back(check("l1_loss(matmul)", instances, op_tol, cases, [](Cases& c) {
        const std::size_t m = c.dim(1, 4), k = c.dim(1, 4), n = c.dim(1, 3);
        auto w = c.tensor({m, k}), x = c.tensor({k, n}), y = c.tensor({m, n}, false);
        return max_gradient_error([&](Graph<double>& g) { return l1_loss(g, matmul(g, w, x), y); }, {w, x});
    }));

    out.push_back(check("backbone", instances, op_tol, cases, [](Cases& c) {
        BackboneConfig cfg{1, 3, 1, c.dim(0, 1) ? 1.0 : 0.5, c.dim(0, 1) == 1};
        auto weights = init_backbone<double>(cfg, c.seed());
        auto img = c.tensor({6, 6, 1}, false), r = c.tensor({6, 6, 3}, false);
        std::vector<T> params;
        for (auto& [name, t] : weights.named_parameters()) {
            params.push_back(t);
        }
        return max_gradient_error(
            [&](Graph<double>& g) { return probe(g, extract_features(g, weights, img).values, r); }, params);
    }));

    out.push_back(check("decode", instances, decode_tol, cases, [](Cases& c) {
        DecoderConfig cfg;
        cfg.M = 4;
        cfg.D = 3;
        cfg.mlp_hidden = {5};
        cfg.out_channels = 3;
        cfg.rel_offset_input = c.dim(0, 1) == 1;
        auto w = init_decoder<double>(cfg, c.seed());
        std::vector<T> params;
        for (auto& [name, t] : w.named_parameters()) {
            // move window weights off the symmetric 1/4 start
            t->data() += c.tensor(t->shape(), false)->data() * 0.1;
            params.push_back(t);
        }
        const std::size_t n = c.dim(1, 3);
        RegionBatch<double> batch{c.tensor({n, 4, 4, 3}), {}};
        for (std::size_t i = 0; i < n; ++i) {
            batch.rel_offsets.push_back({static_cast<double>(c.dim(0, 8)) / 8.0 - 0.5, 0.25});
        }
        auto target = c.tensor({n, 3}, false);
        params.push_back(batch.values);
        return max_gradient_error([&](Graph<double>& g) { return l1_loss(g, decode(g, batch, w), target); }, params);
    }));

    out.push_back(check("end_to_end", instances, decode_tol, cases, [](Cases& c) {
        ModelConfig cfg;
        cfg.backbone = {1, 3, 1, 1.0, true};
        cfg.decoder.M = 4;
        cfg.decoder.D = 3;
        cfg.decoder.mlp_hidden = {6};
        cfg.decoder.out_channels = 1;
        auto model = init_model<double>(cfg, c.seed());
        for (auto& level : model.decoder.windows) {
            for (auto& corner : level.corners) {
                corner->data() += c.tensor(corner->shape(), false)->data() * 0.1;
            }
        }
        auto img = init_tensor<double>({6, 6, 1}, Uniform{c.seed(), 0.0, 1.0});
        std::vector<NormCoord> queries;
        const std::size_t out_side = c.dim(6, 14);
        for (std::size_t i = 0; i < 4; ++i) {
            queries.push_back(hr_to_norm(c.dim(0, out_side - 1), c.dim(0, out_side - 1), out_side, out_side));
        }
        auto target = init_tensor<double>({queries.size(), 1}, Uniform{c.seed(), 0.0, 1.0});
        return max_gradient_error(
            [&](Graph<double>& g) {
                const auto psi = extract_features(g, model.backbone, img);
                return l1_loss(g, predict(g, model, psi, std::span<const NormCoord>(queries)), target);
            },
            model.parameters());
    }));
    return out;
}

} // namespace owslr
