#pragma once

// Network building blocks: the spatial graph convolution layer, the five
// temporal-layer families, the attention modules and the full multi-branch
// network. Structure and parameter inventory mirror the analytic profiler in
// arch.cpp one to one; the registry-equality tests keep the two honest.

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "effgcn/arch.hpp"
#include "effgcn/graph.hpp"
#include "effgcn/ops.hpp"
#include "effgcn/rng.hpp"

namespace effgcn {

/// Structural description of one temporal convolution layer.
struct LayerSpec {
    LayerKind kind = LayerKind::basic;
    int channels_in = 0;
    int channels_out = 0;
    int kernel = 5;
    int stride = 1;
    double ratio = 1.0;

    void validate() const {
        require(channels_in >= 1 && channels_out >= 1, "layer channels must be positive");
        require(kernel >= 1 && kernel % 2 == 1, "temporal kernel must be odd");
        require(stride == 1 || stride == 2, "stride must be 1 or 2");
        require(ratio >= 1.0, "channel ratio must be >= 1");
    }
};

/// Structural description of one GCN block (SGC + depth TC layers + attention).
struct BlockSpec {
    int channels_in = 0;
    int channels_out = 0;
    int depth = 0;
    int stride = 1;
    Attention attention = Attention::st_joint;
};

template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> tensor;
    bool decay = true;  // participates in weight decay
};

/// Owns every trainable tensor and persistent buffer of a network, keyed by
/// unique hierarchical names.
template <typename S>
class Registry {
public:
    Tensor<S> parameter(const std::string& name, Array<S> init, bool decay) {
        claim(name);
        Tensor<S> t = Tensor<S>::leaf(std::move(init), true);
        params_.push_back({name, t, decay});
        return t;
    }

    Tensor<S> xavier(const std::string& name, Shape shape, std::int64_t fan_in,
                     std::int64_t fan_out, Rng& rng) {
        Array<S> init = Array<S>::zeros(shape);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : init.data) v = static_cast<S>(rng.uniform(-bound, bound));
        return parameter(name, std::move(init), true);
    }

    Tensor<S> constant(const std::string& name, Shape shape, S value, bool decay) {
        return parameter(name, Array<S>::full(std::move(shape), value), decay);
    }

    void buffer(const std::string& name, std::shared_ptr<Array<S>> array) {
        claim(name);
        buffers_.emplace_back(name, std::move(array));
    }

    const std::vector<Parameter<S>>& parameters() const { return params_; }

    std::uint64_t total_params() const {
        std::uint64_t n = 0;
        for (const auto& p : params_) n += static_cast<std::uint64_t>(p.tensor.numel());
        return n;
    }

    void zero_grads() const {
        for (const auto& p : params_) p.tensor.zero_grad();
    }

    std::vector<std::pair<std::string, Array<S>>> state_dict() const {
        std::vector<std::pair<std::string, Array<S>>> out;
        out.reserve(params_.size() + buffers_.size());
        for (const auto& p : params_) out.emplace_back(p.name, p.tensor.value());
        for (const auto& [name, arr] : buffers_) out.emplace_back(name, *arr);
        return out;
    }

    void load_state_dict(const std::map<std::string, Array<S>>& state) {
        for (auto& p : params_) assign(state, p.name, p.tensor.value());
        for (auto& [name, arr] : buffers_) assign(state, name, *arr);
    }

private:
    void claim(const std::string& name) {
        if (!names_.insert(name).second)
            throw StructureError("duplicate registry name: " + name);
    }
    static void assign(const std::map<std::string, Array<S>>& state, const std::string& name,
                       Array<S>& dst) {
        auto it = state.find(name);
        if (it == state.end()) throw DataError("checkpoint is missing tensor " + name);
        require(it->second.shape == dst.shape,
                "checkpoint tensor " + name + " has shape " + shape_str(it->second.shape) +
                    ", expected " + shape_str(dst.shape));
        dst.data = it->second.data;
    }

    std::vector<Parameter<S>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<Array<S>>>> buffers_;
    std::set<std::string> names_;
};

template <typename S>
struct Ctx {
    Mode mode = Mode::eval;
    Rng* rng = nullptr;
};

template <typename S>
class BatchNorm {
public:
    BatchNorm(Registry<S>& reg, const std::string& prefix, int channels)
        : stats_(std::make_shared<BnStats<S>>(BnStats<S>::fresh(channels))) {
        gamma_ = reg.constant(prefix + ".gamma", {channels}, S(1), /*decay=*/false);
        beta_ = reg.constant(prefix + ".beta", {channels}, S(0), /*decay=*/false);
        reg.buffer(prefix + ".running_mean",
                   std::shared_ptr<Array<S>>(stats_, &stats_->mean));
        reg.buffer(prefix + ".running_var", std::shared_ptr<Array<S>>(stats_, &stats_->var));
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        return batch_norm(x, gamma_, beta_, *stats_, ctx.mode);
    }

private:
    Tensor<S> gamma_, beta_;
    std::shared_ptr<BnStats<S>> stats_;
};

/// Conv (pointwise or temporal) followed by batch norm.
template <typename S>
class ConvBn {
public:
    // pointwise
    ConvBn(Registry<S>& reg, const std::string& prefix, int cin, int cout, Rng& rng)
        : bn_(reg, prefix + ".bn", cout) {
        w_ = reg.xavier(prefix + ".weight", {cout, cin}, cin, cout, rng);
        b_ = reg.constant(prefix + ".bias", {cout}, S(0), /*decay=*/false);
    }

    // temporal (kernel x 1), optionally strided/grouped
    ConvBn(Registry<S>& reg, const std::string& prefix, int cin, int cout, int kernel, int stride,
           int groups, Rng& rng)
        : stride_(stride), groups_(groups), temporal_(true), bn_(reg, prefix + ".bn", cout) {
        const int cig = cin / groups;
        w_ = reg.xavier(prefix + ".weight", {cout, cig, kernel},
                        static_cast<std::int64_t>(cig) * kernel,
                        static_cast<std::int64_t>(cout) * kernel, rng);
        b_ = reg.constant(prefix + ".bias", {cout}, S(0), /*decay=*/false);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        Tensor<S> h = temporal_ ? temporal_conv(x, w_, b_, stride_, groups_)
                                : pointwise_conv(x, w_, b_);
        return bn_.forward(h, ctx);
    }

    const Tensor<S>& weight() const { return w_; }

private:
    Tensor<S> w_, b_;
    int stride_ = 1, groups_ = 1;
    bool temporal_ = false;
    BatchNorm<S> bn_;
};

/// Projection shortcut: identity when shape-compatible, otherwise a strided
/// pointwise conv plus batch norm.
template <typename S>
class Residual {
public:
    Residual(Registry<S>& reg, const std::string& prefix, int cin, int cout, int stride, Rng& rng) {
        if (stride != 1 || cin != cout)
            proj_.emplace(reg, prefix, cin, cout, /*kernel=*/1, stride, /*groups=*/1, rng);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        return proj_ ? proj_->forward(x, ctx) : x;
    }

private:
    std::optional<ConvBn<S>> proj_;
};

/// Distance-partitioned spatial graph convolution with learnable edge
/// importance, batch norm, residual link and Swish output.
template <typename S>
class SgcLayer {
public:
    SgcLayer(Registry<S>& reg, const std::string& prefix, int cin, int cout,
             const PartitionedAdjacency& adjacency, Rng& rng, bool use_residual = true)
        : cout_(cout),
          partitions_(static_cast<int>(adjacency.normalized.size())),
          bn_(reg, prefix + ".bn", cout),
          residual_(use_residual && cin != cout
                        ? std::optional<ConvBn<S>>(std::in_place, reg, prefix + ".res", cin, cout,
                                                   1, 1, 1, rng)
                        : std::nullopt),
          use_residual_(use_residual) {
        w_ = reg.xavier(prefix + ".weight", {cout * partitions_, cin}, cin,
                        static_cast<std::int64_t>(cout) * partitions_, rng);
        b_ = reg.constant(prefix + ".bias", {cout * partitions_}, S(0), /*decay=*/false);
        for (int d = 0; d < partitions_; ++d) {
            const auto& norm = adjacency.normalized[static_cast<std::size_t>(d)];
            norm_.push_back(norm.template cast<S>());
            edge_.push_back(reg.constant(prefix + ".edge" + std::to_string(d), norm.shape, S(1),
                                         /*decay=*/false));
        }
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        // Aggregation order follows the narrower channel width; both orders
        // compute the same sum.
        Tensor<S> mixed;
        if (x.shape()[0] < cout_) {
            mixed = sgc_premix(x, w_, b_, edge_, norm_, cout_);
        } else {
            Tensor<S> h = pointwise_conv(x, w_, b_);  // [(P*cout), N, T, V]
            mixed = sgc_combine(h, edge_, norm_, cout_);
        }
        Tensor<S> y = bn_.forward(mixed, ctx);
        if (use_residual_) y = add(y, residual_ ? residual_->forward(x, ctx) : x);
        return activation(y, Act::swish);
    }

private:
    int cout_, partitions_;
    Tensor<S> w_, b_;
    std::vector<Tensor<S>> edge_;
    std::vector<Array<S>> norm_;
    BatchNorm<S> bn_;
    std::optional<ConvBn<S>> residual_;
    bool use_residual_;
};

/// One temporal convolution layer in any of the five structural families.
/// Sub-layers are conv + BN; the activation sits between sub-layers (for the
/// sandglass kind after the first depth-wise and the expanding pointwise
/// stage); the residual joins after the last BN. The plain kind activates
/// after its residual.
template <typename S>
class TcLayer {
public:
    TcLayer(Registry<S>& reg, const std::string& prefix, const LayerSpec& spec, Rng& rng)
        : spec_(spec),
          residual_(reg, prefix + ".res", spec.channels_in, spec.channels_out, spec.stride, rng) {
        spec.validate();
        const int cin = spec.channels_in, cout = spec.channels_out;
        const int l = spec.kernel, s = spec.stride;
        switch (spec.kind) {
            case LayerKind::basic:
                stages_.emplace_back(reg, prefix + ".conv", cin, cout, l, s, 1, rng);
                break;
            case LayerKind::bottle: {
                const int inner = reduced_channels(cin, spec.ratio);
                stages_.emplace_back(reg, prefix + ".reduce", cin, inner, rng);
                stages_.emplace_back(reg, prefix + ".mid", inner, inner, l, s, 1, rng);
                stages_.emplace_back(reg, prefix + ".expand", inner, cout, rng);
                break;
            }
            case LayerKind::sep:
                stages_.emplace_back(reg, prefix + ".dw", cin, cin, l, s, cin, rng);
                stages_.emplace_back(reg, prefix + ".pw", cin, cout, rng);
                break;
            case LayerKind::epsep: {
                const int inner = std::max(1, static_cast<int>(std::floor(cin * spec.ratio)));
                stages_.emplace_back(reg, prefix + ".expand", cin, inner, rng);
                stages_.emplace_back(reg, prefix + ".dw", inner, inner, l, s, inner, rng);
                stages_.emplace_back(reg, prefix + ".pw", inner, cout, rng);
                break;
            }
            case LayerKind::sg: {
                const int inner = reduced_channels(cin, spec.ratio);
                stages_.emplace_back(reg, prefix + ".dw1", cin, cin, l, 1, cin, rng);
                stages_.emplace_back(reg, prefix + ".pw1", cin, inner, rng);
                stages_.emplace_back(reg, prefix + ".pw2", inner, cout, rng);
                stages_.emplace_back(reg, prefix + ".dw2", cout, cout, l, s, cout, rng);
                break;
            }
        }
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        Tensor<S> h = x;
        const std::size_t last = stages_.size() - 1;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            h = stages_[i].forward(h, ctx);
            if (activated_after(i, last)) h = activation(h, Act::swish);
        }
        Tensor<S> res = residual_.forward(x, ctx);
        Tensor<S> y = add(h, res);
        if (spec_.kind == LayerKind::basic) y = activation(y, Act::swish);
        return y;
    }

    /// Conv weights only (no biases, no BN), for the cost-model bookkeeping.
    std::uint64_t conv_weight_count() const {
        std::uint64_t n = 0;
        for (const auto& st : stages_) n += static_cast<std::uint64_t>(st.weight().numel());
        return n;
    }

private:
    bool activated_after(std::size_t i, std::size_t last) const {
        if (spec_.kind == LayerKind::sg) return i == 0 || i == 2;  // dw1 and the expanding pw2
        if (spec_.kind == LayerKind::basic) return false;          // activated after the residual
        return i != last;
    }

    LayerSpec spec_;
    std::vector<ConvBn<S>> stages_;
    Residual<S> residual_;
};

/// Joint spatial-temporal attention: pooled frame and joint descriptors are
/// compacted through a shared bottleneck, split, and turned into per-channel
/// frame scores and joint scores whose outer product gates the input.
template <typename S>
class StJointAtt {
public:
    StJointAtt(Registry<S>& reg, const std::string& prefix, int channels, double ratio, Rng& rng)
        : inner_(reduced_channels(channels, ratio)), bn_(reg, prefix + ".bn", inner_) {
        w_ = reg.xavier(prefix + ".weight", {inner_, channels}, channels, inner_, rng);
        wb_ = reg.constant(prefix + ".bias", {inner_}, S(0), false);
        wt_ = reg.xavier(prefix + ".frame.weight", {channels, inner_}, inner_, channels, rng);
        wtb_ = reg.constant(prefix + ".frame.bias", {channels}, S(0), false);
        wv_ = reg.xavier(prefix + ".joint.weight", {channels, inner_}, inner_, channels, rng);
        wvb_ = reg.constant(prefix + ".joint.bias", {channels}, S(0), false);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        const std::int64_t t = x.shape()[2], v = x.shape()[3];
        Tensor<S> frame_desc = mean_over_axes(x, {3});  // [C, N, T]
        Tensor<S> joint_desc = mean_over_axes(x, {2});  // [C, N, V]
        Tensor<S> packed = concat_last(frame_desc, joint_desc);
        Tensor<S> inner =
            activation(bn_.forward(pointwise_conv(packed, w_, wb_), ctx), Act::hardswish);
        Tensor<S> frame_scores =
            activation(pointwise_conv(slice_last(inner, 0, t), wt_, wtb_), Act::sigmoid);
        Tensor<S> joint_scores =
            activation(pointwise_conv(slice_last(inner, t, v), wv_, wvb_), Act::sigmoid);
        return mul_joint_gate(mul_time_gate(x, frame_scores), joint_scores);
    }

private:
    int inner_;
    Tensor<S> w_, wb_, wt_, wtb_, wv_, wvb_;
    BatchNorm<S> bn_;
};

/// Squeeze-excitation style attention over one axis (channel, frame or
/// joint): global-average the other two data axes, push through a two-layer
/// bottleneck with reduction 4 and a sigmoid, and gate the attended axis.
template <typename S>
class SeAtt {
public:
    SeAtt(Registry<S>& reg, const std::string& prefix, Attention kind, int channels,
          std::int64_t frames, int joints, Rng& rng)
        : kind_(kind) {
        switch (kind) {
            case Attention::channel: width_ = channels; break;
            case Attention::frame: width_ = static_cast<int>(frames); break;
            case Attention::joint: width_ = joints; break;
            default: throw std::invalid_argument("SeAtt supports channel/frame/joint kinds");
        }
        const int inner = reduced_channels(width_, 4.0);
        w1_ = reg.xavier(prefix + ".fc1.weight", {inner, width_}, width_, inner, rng);
        b1_ = reg.constant(prefix + ".fc1.bias", {inner}, S(0), false);
        w2_ = reg.xavier(prefix + ".fc2.weight", {width_, inner}, inner, width_, rng);
        b2_ = reg.constant(prefix + ".fc2.bias", {width_}, S(0), false);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) const {
        Tensor<S> pooled;  // [width, N]
        int axis = 0;
        switch (kind_) {
            case Attention::channel:
                pooled = mean_over_axes(x, {2, 3});
                axis = 0;
                break;
            case Attention::frame:
                pooled = transpose2(mean_over_axes(x, {0, 3}));
                axis = 2;
                break;
            default:
                pooled = transpose2(mean_over_axes(x, {0, 2}));
                axis = 3;
                break;
        }
        Tensor<S> h = activation(fully_connected(pooled, w1_, b1_), Act::relu);
        Tensor<S> scores = activation(fully_connected(h, w2_, b2_), Act::sigmoid);
        return mul_axis_gate(x, scores, axis);
    }

private:
    Attention kind_;
    int width_ = 0;
    Tensor<S> w1_, b1_, w2_, b2_;
};

/// SGC layer, `depth` TC layers (the first carries the block stride), then
/// the attention module.
template <typename S>
class GcnBlock {
public:
    GcnBlock(Registry<S>& reg, const std::string& prefix, const BlockSpec& spec,
             const ArchPlan& plan, const PartitionedAdjacency& adjacency, std::int64_t frames_in,
             Rng& rng)
        : sgc_(reg, prefix + ".sgc", spec.channels_in, spec.channels_out, adjacency, rng) {
        require(spec.depth >= 0, "block depth must be non-negative");
        std::int64_t t = frames_in;
        for (int j = 0; j < spec.depth; ++j) {
            LayerSpec ls;
            ls.kind = plan.layer_kind;
            ls.channels_in = spec.channels_out;
            ls.channels_out = spec.channels_out;
            ls.kernel = plan.kernel;
            ls.stride = j == 0 ? spec.stride : 1;
            ls.ratio = plan.ratio;
            tcs_.emplace_back(reg, prefix + ".tc" + std::to_string(j), ls, rng);
            t = (t - 1) / ls.stride + 1;
        }
        frames_out_ = t;
        const int joints = static_cast<int>(adjacency.normalized.front().shape[0]);
        if (spec.attention == Attention::st_joint)
            st_att_.emplace(reg, prefix + ".att", spec.channels_out,
                            attention_ratio(plan.layer_kind, plan.ratio), rng);
        else if (spec.attention != Attention::none)
            se_att_.emplace(reg, prefix + ".att", spec.attention, spec.channels_out, t, joints,
                            rng);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) const {
        Tensor<S> h = sgc_.forward(x, ctx);
        for (const auto& tc : tcs_) h = tc.forward(h, ctx);
        if (st_att_) h = st_att_->forward(h, ctx);
        if (se_att_) h = se_att_->forward(h, ctx);
        return h;
    }

    std::int64_t frames_out() const { return frames_out_; }

private:
    SgcLayer<S> sgc_;
    std::vector<TcLayer<S>> tcs_;
    std::optional<StJointAtt<S>> st_att_;
    std::optional<SeAtt<S>> se_att_;
    std::int64_t frames_out_ = 0;
};

/// The full network: per-branch input BN + fixed plain stem + two stage
/// blocks, channel concatenation, two strided main-stream blocks, global
/// average pooling, dropout and the classifier head.
template <typename S>
class Network {
public:
    Network(const ArchPlan& plan, const SkeletonGraph& graph, Attention attention, int branches,
            std::int64_t frames, std::uint64_t seed, double dropout_p = 0.25)
        : plan_(plan), branches_(branches), frames_(frames), dropout_p_(dropout_p) {
        plan.validate();
        require(plan.stage_channels.size() == 4, "a network plan needs exactly four stages");
        require(branches >= 1 && branches <= 3, "branch count must be 1..3");
        require(frames >= 1, "frames must be positive");
        graph.validate();
        adjacency_ = build_partitions(graph, plan.max_distance);

        Rng rng = Rng(seed).fork("init");
        for (int b = 0; b < branches; ++b) {
            const std::string prefix = "branch" + std::to_string(b);
            Branch branch;
            branch.data_bn.emplace(registry_, prefix + ".stem.data_bn", plan.input_channels);
            branch.stem_sgc.emplace(registry_, prefix + ".stem.sgc", plan.input_channels,
                                    plan.init_channels, adjacency_, rng);
            LayerSpec stem_tc;
            stem_tc.kind = LayerKind::basic;
            stem_tc.channels_in = plan.init_channels;
            stem_tc.channels_out = plan.init_channels;
            stem_tc.kernel = plan.kernel;
            branch.stem_tc.emplace(registry_, prefix + ".stem.tc", stem_tc, rng);

            BlockSpec s1{plan.init_channels, plan.stage_channels[0], plan.stage_depths[0], 1,
                         attention};
            branch.stage1.emplace(registry_, prefix + ".stage1", s1, plan, adjacency_, frames,
                                  rng);
            BlockSpec s2{plan.stage_channels[0], plan.stage_channels[1], plan.stage_depths[1], 1,
                         attention};
            branch.stage2.emplace(registry_, prefix + ".stage2", s2, plan, adjacency_,
                                  branch.stage1->frames_out(), rng);
            branch_nets_.push_back(std::move(branch));
        }

        const int fused = branches * plan.stage_channels[1];
        BlockSpec s3{fused, plan.stage_channels[2], plan.stage_depths[2], 2, attention};
        stage3_.emplace(registry_, "main.stage3", s3, plan, adjacency_, frames, rng);
        BlockSpec s4{plan.stage_channels[2], plan.stage_channels[3], plan.stage_depths[3], 2,
                     attention};
        stage4_.emplace(registry_, "main.stage4", s4, plan, adjacency_, stage3_->frames_out(),
                        rng);

        fc_w_ = registry_.xavier("classifier.fc.weight",
                                 {plan.num_classes, plan.stage_channels[3]},
                                 plan.stage_channels[3], plan.num_classes, rng);
        fc_b_ = registry_.constant("classifier.fc.bias", {plan.num_classes}, S(0), false);
    }

    /// inputs: one [6, N, T, V] tensor per branch (joint, velocity, bone).
    /// Returns per-sample logits [Q, N].
    Tensor<S> forward(const std::vector<Tensor<S>>& inputs, Ctx<S>& ctx) {
        require(static_cast<int>(inputs.size()) == branches_,
                "expected " + std::to_string(branches_) + " branch inputs");
        std::vector<Tensor<S>> outs;
        for (int b = 0; b < branches_; ++b) {
            const auto& br = branch_nets_[static_cast<std::size_t>(b)];
            Tensor<S> h = br.data_bn->forward(inputs[static_cast<std::size_t>(b)], ctx);
            h = br.stem_sgc->forward(h, ctx);
            h = br.stem_tc->forward(h, ctx);
            h = br.stage1->forward(h, ctx);
            h = br.stage2->forward(h, ctx);
            outs.push_back(std::move(h));
        }
        Tensor<S> fused = outs.size() == 1 ? outs[0] : concat_first(outs);
        Tensor<S> h = stage3_->forward(fused, ctx);
        h = stage4_->forward(h, ctx);
        last_feature_map_ = h;
        Tensor<S> feat = mean_over_axes(h, {2, 3});  // [C, N]
        if (ctx.mode == Mode::train && dropout_p_ > 0.0) {
            require(ctx.rng != nullptr, "training forward needs an rng for dropout");
            feat = dropout(feat, dropout_p_, ctx.mode, *ctx.rng);
        }
        return fully_connected(feat, fc_w_, fc_b_);
    }

    Registry<S>& registry() { return registry_; }
    const Registry<S>& registry() const { return registry_; }
    const ArchPlan& plan() const { return plan_; }
    int branches() const { return branches_; }
    std::int64_t frames() const { return frames_; }

    /// Feature map [C, N, T', V] cached by the most recent forward pass.
    const Tensor<S>& last_feature_map() const { return last_feature_map_; }
    const Tensor<S>& classifier_weight() const { return fc_w_; }

private:
    struct Branch {
        std::optional<BatchNorm<S>> data_bn;
        std::optional<SgcLayer<S>> stem_sgc;
        std::optional<TcLayer<S>> stem_tc;
        std::optional<GcnBlock<S>> stage1, stage2;
    };

    ArchPlan plan_;
    int branches_;
    std::int64_t frames_;
    double dropout_p_;
    PartitionedAdjacency adjacency_;
    Registry<S> registry_;
    std::vector<Branch> branch_nets_;
    std::optional<GcnBlock<S>> stage3_, stage4_;
    Tensor<S> fc_w_, fc_b_;
    Tensor<S> last_feature_map_;
};

/// Standalone graph-convolution evaluation used by the per-joint oracle
/// tests: out = sum_d W_d * x * (A_d ⊙ M_d) with an optional residual.
template <typename S>
Tensor<S> sgc_forward(const Tensor<S>& x, const std::vector<Array<S>>& normalized,
                      const std::vector<Tensor<S>>& weights, const std::vector<Tensor<S>>& edges,
                      bool with_residual) {
    require(weights.size() == normalized.size() && edges.size() == normalized.size(),
            "one weight and one edge mask per partition required");
    Tensor<S> out;
    for (std::size_t d = 0; d < normalized.size(); ++d) {
        Tensor<S> part = adjacency_mix(pointwise_conv(x, weights[d]), edges[d], normalized[d]);
        out = d == 0 ? part : add(out, part);
    }
    if (with_residual) {
        require(out.shape() == x.shape(), "identity residual needs matching shapes");
        out = add(out, x);
    }
    return out;
}

}  // namespace effgcn
