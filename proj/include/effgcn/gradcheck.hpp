#pragma once

// Finite-difference verification of the reverse-mode gradients, plus ready
// harnesses for every layer family. Runs in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "effgcn/blocks.hpp"
#include "effgcn/rng.hpp"

namespace effgcn {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    bool all_pass = true;
};

/// Central differences against recorded gradients on a random subsample of
/// coordinates per parameter. The error metric is |ad - fd| / max(1, |ad|,
/// |fd|). loss_fn must rebuild the graph on every call and be deterministic
/// for fixed parameter values.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                                  const std::vector<Parameter<double>>& params,
                                  double tolerance = 1e-5, int coords_per_param = 32,
                                  double h = 1e-5, std::uint64_t seed = 0) {
    GradCheckReport report;
    report.tolerance = tolerance;

    for (const auto& p : params) p.tensor.zero_grad();
    loss_fn().backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        const auto& g = p.tensor.grad().data;
        analytic.emplace_back(g.begin(), g.end());
    }

    Rng rng = Rng(seed).fork("gradcheck");
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& p = params[pi];
        const std::int64_t n = p.tensor.numel();
        std::vector<std::int64_t> coords;
        if (n <= coords_per_param) {
            for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int i = 0; i < coords_per_param; ++i)
                coords.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n))));
        }
        GradCheckEntry entry;
        entry.name = p.name;
        double* data = p.tensor.value().ptr();
        for (std::int64_t c : coords) {
            const double saved = data[c];
            double plus, minus;
            {
                NoGradGuard no_grad;
                data[c] = saved + h;
                plus = loss_fn().value().data[0];
                data[c] = saved - h;
                minus = loss_fn().value().data[0];
                data[c] = saved;
            }
            const double fd = (plus - minus) / (2.0 * h);
            const double ad = analytic[pi][static_cast<std::size_t>(c)];
            const double rel =
                std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        entry.pass = entry.max_rel_err < tolerance;
        report.all_pass = report.all_pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace detail {

inline Tensor<double> random_input(Shape shape, Rng& rng) {
    Array<double> a = Array<double>::zeros(std::move(shape));
    for (auto& v : a.data) v = rng.normal();
    return Tensor<double>::leaf(std::move(a));
}

inline SkeletonGraph small_tree_graph(int joints) {
    SkeletonGraph g;
    g.num_joints = joints;
    g.center = 0;
    g.parents.assign(static_cast<std::size_t>(joints), 0);
    for (int i = 1; i < joints; ++i) {
        const int parent = (i - 1) / 2;
        g.edges.emplace_back(i, parent);
        g.parents[static_cast<std::size_t>(i)] = parent;
    }
    return g;
}

}  // namespace detail

/// Builds the named unit (one of the five TC kinds, sgc, stja, the three SE
/// attentions, bn, fc, or the composed mini network) in f64 and runs the
/// finite-difference check over all its parameters.
inline GradCheckReport gradcheck_unit(const std::string& which, double tolerance = 1e-5,
                                      std::uint64_t seed = 0) {
    Rng rng = Rng(seed).fork("harness");
    Registry<double> reg;
    Ctx<double> ctx{Mode::train, nullptr};

    auto squared_sum = [](const Tensor<double>& y) { return sum(mul(y, y)); };

    if (which == "basic" || which == "bottle" || which == "sep" || which == "epsep" ||
        which == "sg") {
        LayerSpec spec;
        spec.kind = layer_kind_from_string(which);
        spec.channels_in = 6;
        spec.channels_out = 6;
        spec.kernel = 5;
        spec.stride = 2;
        spec.ratio = 2.0;
        auto layer = std::make_shared<TcLayer<double>>(reg, "layer", spec, rng);
        auto x = detail::random_input({6, 2, 7, 4}, rng);
        auto fn = [layer, x, ctx, squared_sum]() mutable {
            return squared_sum(layer->forward(x, ctx));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "sgc") {
        const auto graph = detail::small_tree_graph(5);
        const auto adjacency = build_partitions(graph, 2);
        auto layer = std::make_shared<SgcLayer<double>>(reg, "sgc", 4, 6, adjacency, rng);
        auto x = detail::random_input({4, 2, 3, 5}, rng);
        auto fn = [layer, x, ctx, squared_sum]() mutable {
            return squared_sum(layer->forward(x, ctx));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "stja") {
        auto att = std::make_shared<StJointAtt<double>>(reg, "att", 8, 4.0, rng);
        auto x = detail::random_input({8, 2, 6, 5}, rng);
        auto fn = [att, x, ctx, squared_sum]() mutable {
            return squared_sum(att->forward(x, ctx));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "channel" || which == "frame" || which == "joint") {
        auto att = std::make_shared<SeAtt<double>>(reg, "att", attention_from_string(which), 8,
                                                   6, 5, rng);
        auto x = detail::random_input({8, 2, 6, 5}, rng);
        auto fn = [att, x, ctx, squared_sum]() mutable {
            return squared_sum(att->forward(x, ctx));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "bn") {
        auto bn = std::make_shared<BatchNorm<double>>(reg, "bn", 5);
        auto x = detail::random_input({5, 3, 4, 2}, rng);
        auto fn = [bn, x, ctx, squared_sum]() mutable {
            return squared_sum(bn->forward(x, ctx));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "fc") {
        auto w = reg.xavier("fc.weight", {4, 7}, 7, 4, rng);
        auto b = reg.constant("fc.bias", {4}, 0.0, false);
        auto x = detail::random_input({7, 3}, rng);
        auto fn = [w, b, x, squared_sum]() {
            return squared_sum(fully_connected(x, w, b));
        };
        return grad_check(fn, reg.parameters(), tolerance, 32, 1e-5, seed);
    }
    if (which == "network") {
        ScalingConfig cfg;
        ArchPlan plan = make_arch(cfg);
        for (auto& c : plan.stage_channels) c = std::max(16, c / 2);
        plan.num_classes = 4;
        const auto graph = detail::small_tree_graph(7);
        auto net = std::make_shared<Network<double>>(plan, graph, Attention::st_joint, 3,
                                                     /*frames=*/20, seed, /*dropout_p=*/0.0);
        std::vector<Tensor<double>> inputs;
        for (int b = 0; b < 3; ++b) inputs.push_back(detail::random_input({6, 1, 20, 7}, rng));
        std::vector<std::int64_t> targets{1};
        auto fn = [net, inputs, targets]() mutable {
            Ctx<double> c{Mode::train, nullptr};
            return cross_entropy_mean(net->forward(inputs, c), targets);
        };
        return grad_check(fn, net->registry().parameters(), tolerance, 32, 1e-5, seed);
    }
    throw std::invalid_argument("unknown gradcheck unit: " + which);
}

}  // namespace effgcn
