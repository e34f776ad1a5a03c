#pragma once

// Loss, optimizer, schedule, the desk-scale training loop, evaluation and
// class activation maps.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>

#include "effgcn/blocks.hpp"
#include "effgcn/dataset.hpp"
#include "effgcn/serialize.hpp"

namespace effgcn {

struct TrainConfig {
    int epochs = 70;
    double base_lr = 0.1;
    int warmup_epochs = 10;
    double momentum = 0.9;  // Nesterov
    double weight_decay = 1e-4;
    double dropout = 0.25;
    int batch_size = 16;
    std::uint64_t seed = 0;
    bool exclude_bn_bias_from_decay = true;

    void validate() const {
        require(epochs >= 1 && warmup_epochs >= 0 && warmup_epochs < epochs,
                "warmup must be shorter than the epoch budget");
        require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
        require(batch_size >= 1, "batch size must be positive");
        require(base_lr > 0.0 && momentum >= 0.0 && weight_decay >= 0.0,
                "optimizer constants must be non-negative (lr positive)");
    }
};

struct Metrics {
    double loss = 0.0;
    double top1_accuracy = 0.0;
    Array<std::int64_t> confusion;  // rows = truth, columns = prediction
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double eval_acc = std::numeric_limits<double>::quiet_NaN();
};

/// Linear warmup from zero over warmup_epochs, then cosine decay to zero
/// across the remaining epochs.
inline double lr_at_epoch(int epoch, const TrainConfig& config) {
    config.validate();
    require(epoch >= 0 && epoch < config.epochs, "epoch out of range");
    if (epoch < config.warmup_epochs)
        return config.base_lr * static_cast<double>(epoch) / config.warmup_epochs;
    const double span = static_cast<double>(config.epochs - config.warmup_epochs);
    const double progress = static_cast<double>(epoch - config.warmup_epochs) / span;
    return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Numerically stable softmax (max subtraction).
template <typename S>
std::vector<S> softmax(std::span<const S> logits) {
    require(!logits.empty(), "softmax needs at least one logit");
    S zmax = logits[0];
    for (S z : logits) zmax = std::max(zmax, z);
    std::vector<S> out(logits.size());
    S denom = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - zmax);
        denom += out[i];
    }
    for (auto& p : out) p /= denom;
    return out;
}

/// Loss -log softmax(z)[target] and its gradient softmax(z) - onehot(target).
template <typename S>
std::pair<S, std::vector<S>> softmax_cross_entropy(std::span<const S> logits, int target) {
    require(target >= 0 && target < static_cast<int>(logits.size()),
            "target class out of range");
    std::vector<S> grad = softmax(logits);
    const S loss = -std::log(grad[static_cast<std::size_t>(target)]);
    grad[static_cast<std::size_t>(target)] -= S(1);
    return {loss, std::move(grad)};
}

/// Nesterov momentum update over raw buffers:
///   g <- grad + wd * param;  v <- momentum * v + g;  param -= lr * (g + momentum * v)
template <typename S>
void sgd_nesterov_update(S* param, const S* grad, S* velocity, std::int64_t n, double lr,
                         double momentum, double weight_decay) {
    for (std::int64_t i = 0; i < n; ++i) {
        const S g = grad[i] + static_cast<S>(weight_decay) * param[i];
        velocity[i] = static_cast<S>(momentum) * velocity[i] + g;
        param[i] -= static_cast<S>(lr) * (g + static_cast<S>(momentum) * velocity[i]);
    }
}

template <typename S>
struct SgdState {
    std::vector<Array<S>> velocity;

    static SgdState init(const std::vector<Parameter<S>>& params) {
        SgdState s;
        s.velocity.reserve(params.size());
        for (const auto& p : params) s.velocity.push_back(Array<S>::zeros(p.tensor.shape()));
        return s;
    }
};

template <typename S>
void sgd_nesterov_step(const std::vector<Parameter<S>>& params, SgdState<S>& state, double lr,
                       double momentum, double weight_decay, bool exclude_no_decay = true) {
    require(state.velocity.size() == params.size(), "optimizer state sized for another network");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        const double wd = (exclude_no_decay && !p.decay) ? 0.0 : weight_decay;
        sgd_nesterov_update(p.tensor.value().ptr(), p.tensor.grad().ptr(),
                            state.velocity[i].ptr(), p.tensor.numel(), lr, momentum, wd);
    }
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

template <typename S>
struct Batch {
    std::vector<Tensor<S>> inputs;  // one [6, N, T, V] per branch
    std::vector<std::pair<std::int64_t, std::int64_t>> groups;  // body columns per sequence
    std::vector<std::int64_t> targets;
};

/// Stacks the active bodies of the chosen sequences into branch tensors.
/// Sequences shorter than `frames` are padded; branch order is joint,
/// velocity, bone (truncated to the branch count).
template <typename S>
Batch<S> make_batch(const Dataset& data, std::span<const std::size_t> indices,
                    const SkeletonGraph& graph, int frames, int branches) {
    prof::Scope prof_scope_("make_batch");
    require(branches >= 1 && branches <= 3, "branch count must be 1..3");
    Batch<S> batch;
    std::vector<const Array<double>*> sources;  // per body, per branch
    std::vector<std::vector<BranchInput>> keep_alive;

    std::int64_t total_bodies = 0;
    for (std::size_t idx : indices) {
        const RawSequence padded = pad_to_frames(data.items[idx], frames);
        auto bodies = assemble_branches(padded, graph);
        std::vector<int> active;
        for (int m = 0; m < padded.bodies(); ++m)
            if (padded.body_active(m)) active.push_back(m);
        if (active.empty()) active.push_back(0);
        batch.groups.emplace_back(total_bodies, static_cast<std::int64_t>(active.size()));
        if (!data.items[idx].label)
            throw DataError("sequence " + data.ids[idx] + " carries no label");
        batch.targets.push_back(*data.items[idx].label);
        total_bodies += static_cast<std::int64_t>(active.size());
        std::vector<BranchInput> kept;
        for (int m : active) kept.push_back(std::move(bodies[static_cast<std::size_t>(m)]));
        keep_alive.push_back(std::move(kept));
    }

    const int v = graph.num_joints;
    const std::int64_t plane = static_cast<std::int64_t>(frames) * v;
    for (int b = 0; b < branches; ++b) {
        Array<S> stacked = Array<S>::zeros({6, total_bodies, frames, v});
        std::int64_t col = 0;
        for (const auto& seq_bodies : keep_alive) {
            for (const auto& body : seq_bodies) {
                const Array<double>& src =
                    b == 0 ? body.joint : (b == 1 ? body.velocity : body.bone);
                for (int c = 0; c < 6; ++c) {
                    S* dst = stacked.ptr() + (static_cast<std::int64_t>(c) * total_bodies + col) * plane;
                    const double* s = src.ptr() + static_cast<std::int64_t>(c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] = static_cast<S>(s[i]);
                }
                ++col;
            }
        }
        batch.inputs.push_back(Tensor<S>::leaf(std::move(stacked)));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

template <typename S>
Metrics evaluate(Network<S>& net, const Dataset& data, const SkeletonGraph& graph,
                 int batch_size = 32) {
    require(!data.empty(), "evaluation needs a non-empty dataset");
    const int q = net.plan().num_classes;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data.items[i].label) throw DataError("sequence " + data.ids[i] + " carries no label");
        if (*data.items[i].label < 0 || *data.items[i].label >= q)
            throw DataError("sequence " + data.ids[i] + " has class " +
                            std::to_string(*data.items[i].label) + ", network expects < " +
                            std::to_string(q));
    }

    Metrics metrics;
    metrics.confusion = Array<std::int64_t>::zeros({q, q});
    NoGradGuard no_grad;
    Ctx<S> ctx{Mode::eval, nullptr};
    double loss_sum = 0.0;
    std::int64_t correct = 0;

    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> indices;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i)
            indices.push_back(i);
        Batch<S> batch = make_batch<S>(data, indices, graph, static_cast<int>(net.frames()),
                                       net.branches());
        Tensor<S> logits = net.forward(batch.inputs, ctx);
        Tensor<S> seq_logits = group_mean_cols(logits, batch.groups);
        const std::int64_t n = static_cast<std::int64_t>(batch.targets.size());
        const S* zp = seq_logits.value().ptr();
        for (std::int64_t col = 0; col < n; ++col) {
            std::vector<S> z(static_cast<std::size_t>(q));
            for (int r = 0; r < q; ++r) z[static_cast<std::size_t>(r)] = zp[r * n + col];
            const auto [loss, grad] =
                softmax_cross_entropy<S>(z, static_cast<int>(batch.targets[static_cast<std::size_t>(col)]));
            loss_sum += static_cast<double>(loss);
            int pred = 0;
            for (int r = 1; r < q; ++r)
                if (z[static_cast<std::size_t>(r)] > z[static_cast<std::size_t>(pred)]) pred = r;
            const auto truth = batch.targets[static_cast<std::size_t>(col)];
            metrics.confusion.data[static_cast<std::size_t>(truth * q + pred)] += 1;
            if (pred == truth) ++correct;
        }
    }
    metrics.loss = loss_sum / static_cast<double>(data.size());
    metrics.top1_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return metrics;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

template <typename S>
struct TrainResult {
    std::vector<EpochLog> log;
    std::string checkpoint_path;
    std::string log_path;
};

namespace detail {

inline std::string csv_double(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

}  // namespace detail

/// Deterministic under config.seed: initialization (done at network build
/// with the same seed), shuffling and dropout all derive from it. Writes
/// <out_dir>/train_log.csv and <out_dir>/checkpoint.skck, refreshed every
/// epoch.
template <typename S>
TrainResult<S> train(Network<S>& net, const Dataset& train_set, const Dataset* eval_set,
                     const SkeletonGraph& graph, const TrainConfig& config,
                     const std::string& out_dir) {
    config.validate();
    require(!train_set.empty(), "training needs a non-empty dataset");
    const int q = net.plan().num_classes;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        if (!train_set.items[i].label || *train_set.items[i].label < 0 ||
            *train_set.items[i].label >= q)
            throw DataError("sequence " + train_set.ids[i] + " lacks a class below " +
                            std::to_string(q));
    }

    std::filesystem::create_directories(out_dir);
    TrainResult<S> result;
    result.checkpoint_path = (std::filesystem::path(out_dir) / "checkpoint.skck").string();
    result.log_path = (std::filesystem::path(out_dir) / "train_log.csv").string();

    Rng shuffle_rng = Rng(config.seed).fork("shuffle");
    Rng dropout_rng = Rng(config.seed).fork("dropout");
    auto& params = net.registry().parameters();
    SgdState<S> state = SgdState<S>::init(params);

    std::ofstream log(result.log_path);
    if (!log) throw FormatError("cannot write " + result.log_path, 0);
    log << "epoch,lr,train_loss,train_acc,eval_acc\n";

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(epoch, config);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::int64_t correct = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::vector<std::size_t> indices(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() +
                    static_cast<std::ptrdiff_t>(
                        std::min(order.size(), start + config.batch_size)));
            Batch<S> batch =
                make_batch<S>(train_set, indices, graph, static_cast<int>(net.frames()),
                              net.branches());
            Ctx<S> ctx{Mode::train, &dropout_rng};
            Tensor<S> logits = net.forward(batch.inputs, ctx);
            Tensor<S> seq_logits = group_mean_cols(logits, batch.groups);
            Tensor<S> loss = cross_entropy_mean(seq_logits, batch.targets);

            const double loss_value = static_cast<double>(loss.value().data[0]);
            if (!std::isfinite(loss_value))
                throw StateError("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(start / config.batch_size) + ", lr " +
                                 std::to_string(lr));
            loss_sum += loss_value * static_cast<double>(batch.targets.size());

            const std::int64_t n = static_cast<std::int64_t>(batch.targets.size());
            const S* zp = seq_logits.value().ptr();
            for (std::int64_t col = 0; col < n; ++col) {
                int pred = 0;
                for (int r = 1; r < q; ++r)
                    if (zp[r * n + col] > zp[pred * n + col]) pred = r;
                if (pred == batch.targets[static_cast<std::size_t>(col)]) ++correct;
            }

            net.registry().zero_grads();
            loss.backward();
            sgd_nesterov_step(params, state, lr, config.momentum, config.weight_decay,
                              config.exclude_bn_bias_from_decay);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / static_cast<double>(train_set.size());
        entry.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        if (eval_set && !eval_set->empty())
            entry.eval_acc = evaluate(net, *eval_set, graph).top1_accuracy;
        result.log.push_back(entry);

        log << entry.epoch << ',' << detail::csv_double(entry.lr) << ','
            << detail::csv_double(entry.train_loss) << ',' << detail::csv_double(entry.train_acc)
            << ',' << detail::csv_double(entry.eval_acc) << '\n';
        log.flush();
        save_checkpoint_typed<S>(result.checkpoint_path, net.registry().state_dict());
    }
    return result;
}

// ---------------------------------------------------------------------------
// class activation maps
// ---------------------------------------------------------------------------

/// Saliency over the final feature map: ReLU of the class row of the
/// classifier weights contracted with the per-position features, averaged
/// over active bodies and normalized to [0, 1] by its max (an all-zero map
/// stays zero). Shape [T', V].
template <typename S>
Array<S> class_activation_map(Network<S>& net, const RawSequence& seq,
                              const SkeletonGraph& graph, int class_index) {
    const int q = net.plan().num_classes;
    require(class_index >= 0 && class_index < q, "class index out of range");
    Dataset single;
    single.ids.push_back("sample");
    single.items.push_back(seq);
    single.items.back().label = 0;  // unused by the forward pass
    std::vector<std::size_t> indices{0};
    NoGradGuard no_grad;
    Batch<S> batch = make_batch<S>(single, indices, graph, static_cast<int>(net.frames()),
                                   net.branches());
    Ctx<S> ctx{Mode::eval, nullptr};
    (void)net.forward(batch.inputs, ctx);

    const Tensor<S>& fmap = net.last_feature_map();  // [C, N, T', V]
    const auto& shape = fmap.shape();
    const std::int64_t c_len = shape[0], n_len = shape[1], t_len = shape[2], v_len = shape[3];
    const S* fp = fmap.value().ptr();
    const S* wp = net.classifier_weight().value().ptr();  // [Q, C]

    Array<S> map = Array<S>::zeros({t_len, v_len});
    for (std::int64_t c = 0; c < c_len; ++c) {
        const S wc = wp[class_index * c_len + c];
        for (std::int64_t nb = 0; nb < n_len; ++nb) {
            const S* plane = fp + (c * n_len + nb) * t_len * v_len;
            for (std::int64_t i = 0; i < t_len * v_len; ++i)
                map.data[static_cast<std::size_t>(i)] +=
                    wc * plane[i] / static_cast<S>(n_len);
        }
    }
    S peak = 0;
    for (auto& v : map.data) {
        v = std::max(S(0), v);
        peak = std::max(peak, v);
    }
    if (peak > S(0))
        for (auto& v : map.data) v /= peak;
    return map;
}

}  // namespace effgcn
