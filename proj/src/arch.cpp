#include "effgcn/arch.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace effgcn {

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "basic") return LayerKind::basic;
    if (name == "bottle") return LayerKind::bottle;
    if (name == "sep") return LayerKind::sep;
    if (name == "epsep") return LayerKind::epsep;
    if (name == "sg") return LayerKind::sg;
    throw std::invalid_argument("unknown layer kind: " + name);
}

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::basic: return "basic";
        case LayerKind::bottle: return "bottle";
        case LayerKind::sep: return "sep";
        case LayerKind::epsep: return "epsep";
        case LayerKind::sg: return "sg";
    }
    return "?";
}

Attention attention_from_string(const std::string& name) {
    if (name == "none") return Attention::none;
    if (name == "st_joint" || name == "stja") return Attention::st_joint;
    if (name == "channel") return Attention::channel;
    if (name == "frame") return Attention::frame;
    if (name == "joint") return Attention::joint;
    throw std::invalid_argument("unknown attention kind: " + name);
}

std::string to_string(Attention kind) {
    switch (kind) {
        case Attention::none: return "none";
        case Attention::st_joint: return "st_joint";
        case Attention::channel: return "channel";
        case Attention::frame: return "frame";
        case Attention::joint: return "joint";
    }
    return "?";
}

void ArchPlan::validate() const {
    require(stage_channels.size() == stage_depths.size(),
            "stage channel and depth lists must have equal length");
    for (int c : stage_channels) require(c >= 1, "stage channels must be positive");
    for (int d : stage_depths) require(d >= 0, "stage depths must be non-negative");
    require(ratio >= 1.0, "channel ratio must be >= 1");
    require(max_distance >= 0, "max graph distance must be non-negative");
    require(kernel >= 1 && kernel % 2 == 1, "temporal kernel must be odd");
    require(input_channels >= 1 && init_channels >= 1 && num_classes >= 1,
            "channel and class counts must be positive");
}

int step_round(double x) {
    require(x >= 0.0, "step_round is defined for non-negative inputs");
    const double floor_part = std::floor(x);
    return static_cast<int>(x - floor_part > 0.5 ? floor_part + 1.0 : floor_part);
}

int scale_channels(int c0, double alpha, int phi) {
    require(c0 > 0, "base channels must be positive");
    const int scaled = step_round(static_cast<double>(c0) / 16.0 * std::pow(alpha, phi)) * 16;
    return std::max(scaled, 16);
}

int scale_depth(double l0, double beta, int phi) {
    require(l0 >= 0.0, "base depth must be non-negative");
    return step_round(l0 * std::pow(beta, phi));
}

ConstraintCheck check_scaling_constraint(double alpha, double beta, double tolerance) {
    ConstraintCheck c;
    c.residual = std::abs(alpha * alpha * beta - 2.0);
    c.pass = c.residual <= tolerance;
    return c;
}

ArchPlan make_arch(const ScalingConfig& config, LayerKind kind, double ratio, int max_distance,
                   int kernel, int num_classes, bool force) {
    require(config.alpha >= 1.0 && config.beta >= 1.0, "alpha and beta must be >= 1");
    require(config.phi >= 0, "phi must be non-negative");
    const auto constraint = check_scaling_constraint(config.alpha, config.beta);
    if (!constraint.pass && !force)
        throw ConfigError("alpha^2*beta misses 2 by " + std::to_string(constraint.residual) +
                          " (tolerance 0.1); pass force to build anyway");
    ArchPlan plan;
    plan.phi = config.phi;
    plan.alpha = config.alpha;
    plan.beta = config.beta;
    plan.layer_kind = kind;
    plan.ratio = ratio;
    plan.max_distance = max_distance;
    plan.kernel = kernel;
    plan.num_classes = num_classes;
    for (int s = 0; s < 4; ++s) {
        plan.stage_channels.push_back(
            scale_channels(config.base_channels[static_cast<std::size_t>(s)], config.alpha,
                           config.phi));
        plan.stage_depths.push_back(
            scale_depth(config.base_depths[static_cast<std::size_t>(s)], config.beta, config.phi));
    }
    plan.validate();
    return plan;
}

double attention_ratio(LayerKind kind, double layer_ratio) {
    return (kind == LayerKind::sg || kind == LayerKind::bottle) ? layer_ratio : 4.0;
}

int reduced_channels(int c, double ratio) {
    return std::max(1, static_cast<int>(std::floor(static_cast<double>(c) / ratio)));
}

namespace {

using u64 = std::uint64_t;

int expanded_channels(int c, double ratio) {
    return std::max(1, static_cast<int>(std::floor(static_cast<double>(c) * ratio)));
}

std::int64_t strided_frames(std::int64_t t, int stride) { return (t - 1) / stride + 1; }

struct Cost {
    u64 params = 0;
    u64 flops = 0;
    Cost& operator+=(const Cost& o) {
        params += o.params;
        flops += o.flops;
        return *this;
    }
};

Cost conv_cost(u64 weights, u64 biases, u64 bn_channels, u64 positions) {
    return {weights + biases + 2 * bn_channels, weights * positions};
}

// Spatial graph convolution layer: combined pointwise conv into
// (D+1)*C_out channels, per-partition aggregation at C_out, edge-importance
// masks, batch norm, and a projected residual when the widths differ.
Cost sgc_cost(int cin, int cout, int partitions, int v, std::int64_t t) {
    const u64 pos = static_cast<u64>(t) * static_cast<u64>(v);
    Cost c;
    c += conv_cost(static_cast<u64>(cin) * cout * partitions,
                   static_cast<u64>(cout) * partitions, static_cast<u64>(cout), pos);
    c.params += static_cast<u64>(partitions) * v * v;                       // edge masks
    c.flops += static_cast<u64>(partitions) * cout * t * v * v;             // aggregation
    if (cin != cout)
        c += conv_cost(static_cast<u64>(cin) * cout, static_cast<u64>(cout),
                       static_cast<u64>(cout), pos);
    return c;
}

Cost tc_residual_cost(int cin, int cout, int stride, std::int64_t t_out, int v) {
    if (stride == 1 && cin == cout) return {};
    return conv_cost(static_cast<u64>(cin) * cout, static_cast<u64>(cout),
                     static_cast<u64>(cout), static_cast<u64>(t_out) * v);
}

Cost tc_cost(LayerKind kind, int cin, int cout, int kernel, double ratio, int stride,
             std::int64_t t_in, int v) {
    const std::int64_t t_out = strided_frames(t_in, stride);
    const u64 pin = static_cast<u64>(t_in) * v;
    const u64 pout = static_cast<u64>(t_out) * v;
    Cost c;
    switch (kind) {
        case LayerKind::basic:
            c += conv_cost(static_cast<u64>(cin) * cout * kernel, static_cast<u64>(cout),
                           static_cast<u64>(cout), pout);
            break;
        case LayerKind::bottle: {
            const int inner = reduced_channels(cin, ratio);
            c += conv_cost(static_cast<u64>(cin) * inner, static_cast<u64>(inner),
                           static_cast<u64>(inner), pin);
            c += conv_cost(static_cast<u64>(inner) * inner * kernel, static_cast<u64>(inner),
                           static_cast<u64>(inner), pout);
            c += conv_cost(static_cast<u64>(inner) * cout, static_cast<u64>(cout),
                           static_cast<u64>(cout), pout);
            break;
        }
        case LayerKind::sep:
            c += conv_cost(static_cast<u64>(cin) * kernel, static_cast<u64>(cin),
                           static_cast<u64>(cin), pout);
            c += conv_cost(static_cast<u64>(cin) * cout, static_cast<u64>(cout),
                           static_cast<u64>(cout), pout);
            break;
        case LayerKind::epsep: {
            const int inner = expanded_channels(cin, ratio);
            c += conv_cost(static_cast<u64>(cin) * inner, static_cast<u64>(inner),
                           static_cast<u64>(inner), pin);
            c += conv_cost(static_cast<u64>(inner) * kernel, static_cast<u64>(inner),
                           static_cast<u64>(inner), pout);
            c += conv_cost(static_cast<u64>(inner) * cout, static_cast<u64>(cout),
                           static_cast<u64>(cout), pout);
            break;
        }
        case LayerKind::sg: {
            const int inner = reduced_channels(cin, ratio);
            c += conv_cost(static_cast<u64>(cin) * kernel, static_cast<u64>(cin),
                           static_cast<u64>(cin), pin);
            c += conv_cost(static_cast<u64>(cin) * inner, static_cast<u64>(inner),
                           static_cast<u64>(inner), pin);
            c += conv_cost(static_cast<u64>(inner) * cout, static_cast<u64>(cout),
                           static_cast<u64>(cout), pin);
            c += conv_cost(static_cast<u64>(cout) * kernel, static_cast<u64>(cout),
                           static_cast<u64>(cout), pout);
            break;
        }
    }
    c += tc_residual_cost(cin, cout, stride, t_out, v);
    return c;
}

Cost attention_cost(Attention att, int c, std::int64_t t, int v, double st_ratio) {
    Cost cost;
    switch (att) {
        case Attention::none:
            break;
        case Attention::st_joint: {
            const int inner = reduced_channels(c, st_ratio);
            cost.params += static_cast<u64>(c) * inner + inner + 2 * static_cast<u64>(inner);
            cost.params += 2 * (static_cast<u64>(inner) * c + c);
            cost.flops += static_cast<u64>(c) * inner * static_cast<u64>(t + v);
            cost.flops += static_cast<u64>(inner) * c * static_cast<u64>(t);
            cost.flops += static_cast<u64>(inner) * c * static_cast<u64>(v);
            break;
        }
        case Attention::channel:
        case Attention::frame:
        case Attention::joint: {
            const int width = att == Attention::channel ? c
                              : att == Attention::frame ? static_cast<int>(t)
                                                        : v;
            const int inner = reduced_channels(width, 4.0);
            cost.params += static_cast<u64>(width) * inner + inner;
            cost.params += static_cast<u64>(inner) * width + width;
            cost.flops += 2 * static_cast<u64>(width) * inner;
            break;
        }
    }
    return cost;
}

Cost stage_block_cost(const ArchPlan& plan, int cin, int cout, int depth, int stride,
                      Attention att, int v, std::int64_t t_in, std::int64_t* t_out_holder) {
    const int partitions = plan.max_distance + 1;
    Cost c = sgc_cost(cin, cout, partitions, v, t_in);
    std::int64_t t = t_in;
    for (int j = 0; j < depth; ++j) {
        const int s = j == 0 ? stride : 1;
        c += tc_cost(plan.layer_kind, cout, cout, plan.kernel, plan.ratio, s, t, v);
        t = strided_frames(t, s);
    }
    c += attention_cost(att, cout, t, v, attention_ratio(plan.layer_kind, plan.ratio));
    if (t_out_holder) *t_out_holder = t;
    return c;
}

ComplexityReport profile(const ArchPlan& plan, const ProfileOptions& opt) {
    plan.validate();
    require(opt.frames >= 1 && opt.joints >= 1, "frames and joints must be positive");
    require(opt.branches >= 1 && opt.branches <= 3, "branch count must be 1..3");
    require(opt.bodies >= 1, "body count must be positive");

    ComplexityReport report;
    report.frames = opt.frames;
    report.joints = opt.joints;
    report.bodies = opt.bodies;
    {
        std::ostringstream conv;
        conv << "1 MAC = 1 FLOP over conv/FC/adjacency products (aggregation at C_out); "
             << "BN, activations, pooling and elementwise masks excluded; one forward pass of "
             << opt.bodies << " body(ies) at T=" << opt.frames << ", V=" << opt.joints;
        report.convention = conv.str();
    }
    if (plan.stage_channels.empty()) return report;
    require(plan.stage_channels.size() == 4, "a network plan needs exactly four stages");

    const int v = opt.joints;
    const int partitions = plan.max_distance + 1;
    const std::int64_t t_in = opt.frames;
    auto push = [&](const std::string& name, Cost c) {
        c.flops *= static_cast<u64>(opt.bodies);
        report.blocks.push_back({name, c.params, c.flops});
        report.total_params += c.params;
        report.total_flops += c.flops;
    };

    for (int b = 0; b < opt.branches; ++b) {
        const std::string prefix = "branch" + std::to_string(b);
        Cost stem;
        stem.params += 2 * static_cast<u64>(plan.input_channels);  // data BN
        stem += sgc_cost(plan.input_channels, plan.init_channels, partitions, v, t_in);
        stem += tc_cost(LayerKind::basic, plan.init_channels, plan.init_channels, plan.kernel,
                        plan.ratio, 1, t_in, v);
        push(prefix + ".stem", stem);
        push(prefix + ".stage1",
             stage_block_cost(plan, plan.init_channels, plan.stage_channels[0],
                              plan.stage_depths[0], 1, opt.attention, v, t_in, nullptr));
        push(prefix + ".stage2",
             stage_block_cost(plan, plan.stage_channels[0], plan.stage_channels[1],
                              plan.stage_depths[1], 1, opt.attention, v, t_in, nullptr));
    }

    const int fused = opt.branches * plan.stage_channels[1];
    std::int64_t t3 = t_in;
    push("main.stage3", stage_block_cost(plan, fused, plan.stage_channels[2],
                                         plan.stage_depths[2], 2, opt.attention, v, t_in, &t3));
    std::int64_t t4 = t3;
    push("main.stage4", stage_block_cost(plan, plan.stage_channels[2], plan.stage_channels[3],
                                         plan.stage_depths[3], 2, opt.attention, v, t3, &t4));

    Cost cls;
    cls.params = static_cast<u64>(plan.stage_channels[3]) * plan.num_classes + plan.num_classes;
    cls.flops = static_cast<u64>(plan.stage_channels[3]) * plan.num_classes;
    push("classifier", cls);
    return report;
}

}  // namespace

ComplexityReport count_params(const ArchPlan& plan, const ProfileOptions& options) {
    return profile(plan, options);
}

ComplexityReport count_flops(const ArchPlan& plan, const ProfileOptions& options) {
    return profile(plan, options);
}

std::vector<SweepCell> receptive_sweep(const ArchPlan& plan_template,
                                       const std::vector<int>& distances,
                                       const std::vector<int>& kernels,
                                       const ProfileOptions& options) {
    require(!distances.empty() && !kernels.empty(), "sweep ranges must be non-empty");
    std::vector<SweepCell> cells;
    for (int l : kernels) {
        for (int d : distances) {
            ArchPlan plan = plan_template;
            plan.max_distance = d;
            plan.kernel = l;
            cells.push_back({d, l, profile(plan, options)});
        }
    }
    return cells;
}

namespace {

nlohmann::json plan_json(const ArchPlan& plan) {
    nlohmann::json j;
    j["phi"] = plan.phi;
    j["alpha"] = plan.alpha;
    j["beta"] = plan.beta;
    j["layer_kind"] = to_string(plan.layer_kind);
    j["ratio"] = plan.ratio;
    j["D"] = plan.max_distance;
    j["L"] = plan.kernel;
    j["stage_channels"] = plan.stage_channels;
    j["stage_depths"] = plan.stage_depths;
    j["num_classes"] = plan.num_classes;
    return j;
}

ArchPlan plan_from(const nlohmann::json& j) {
    ArchPlan plan;
    try {
        plan.phi = j.at("phi").get<int>();
        plan.alpha = j.at("alpha").get<double>();
        plan.beta = j.at("beta").get<double>();
        plan.layer_kind = layer_kind_from_string(j.at("layer_kind").get<std::string>());
        plan.ratio = j.at("ratio").get<double>();
        plan.max_distance = j.at("D").get<int>();
        plan.kernel = j.at("L").get<int>();
        plan.stage_channels = j.at("stage_channels").get<std::vector<int>>();
        plan.stage_depths = j.at("stage_depths").get<std::vector<int>>();
        plan.num_classes = j.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("architecture plan JSON is malformed: ") + e.what(), 0);
    }
    plan.validate();
    return plan;
}

}  // namespace

std::string arch_plan_to_json(const ArchPlan& plan) { return plan_json(plan).dump(2); }

ArchPlan arch_plan_from_json(const std::string& text) {
    try {
        return plan_from(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("architecture plan is not valid JSON: ") + e.what(), e.byte);
    }
}

ArchPlan load_arch_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open plan file " + path, 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    return arch_plan_from_json(buf.str());
}

void save_arch_plan(const ArchPlan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write plan file " + path, 0);
    out << arch_plan_to_json(plan) << "\n";
}

}  // namespace effgcn
