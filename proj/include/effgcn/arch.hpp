#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "effgcn/common.hpp"

namespace effgcn {

enum class LayerKind { basic, bottle, sep, epsep, sg };
enum class Attention { none, st_joint, channel, frame, joint };

LayerKind layer_kind_from_string(const std::string& name);
std::string to_string(LayerKind kind);
Attention attention_from_string(const std::string& name);
std::string to_string(Attention kind);

/// Width/depth multipliers alpha^phi and beta^phi under alpha^2 * beta ~ 2.
struct ScalingConfig {
    double alpha = 1.2;
    double beta = 1.35;
    int phi = 0;
    std::array<int, 4> base_channels{48, 24, 64, 128};
    std::array<double, 4> base_depths{0.5, 0.5, 1.0, 1.0};
};

/// Concrete per-stage widths and depths plus the structural hyperparameters
/// shared by the builder and the profiler. Stages 1-2 live in each input
/// branch, stages 3-4 in the fused main stream.
struct ArchPlan {
    std::vector<int> stage_channels;  // 4 entries for a full network
    std::vector<int> stage_depths;
    LayerKind layer_kind = LayerKind::sg;
    double ratio = 2.0;
    int max_distance = 2;
    int kernel = 5;
    int input_channels = 6;
    int init_channels = 64;
    int num_classes = 60;
    int phi = 0;
    double alpha = 1.2;
    double beta = 1.35;

    void validate() const;
};

struct BlockCost {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

struct ComplexityReport {
    std::uint64_t total_params = 0;
    std::uint64_t total_flops = 0;
    std::vector<BlockCost> blocks;
    int frames = 0;
    int joints = 0;
    int bodies = 0;
    std::string convention;
};

struct ProfileOptions {
    int frames = 300;
    int joints = 25;
    Attention attention = Attention::st_joint;
    int branches = 3;
    int bodies = 2;
};

/// Rounds halves down: ceil(x) only when the fractional part exceeds 0.5.
int step_round(double x);

/// step_round(C0/16 * alpha^phi) * 16, floored at 16.
int scale_channels(int c0, double alpha, int phi);

/// step_round(L0 * beta^phi).
int scale_depth(double l0, double beta, int phi);

struct ConstraintCheck {
    double residual = 0.0;
    bool pass = false;
};

/// Residual |alpha^2 * beta - 2| against the compound-scaling constraint.
ConstraintCheck check_scaling_constraint(double alpha, double beta, double tolerance = 0.1);

/// Expands a scaling configuration into a concrete plan. A constraint
/// violation raises ConfigError unless force is set.
ArchPlan make_arch(const ScalingConfig& config, LayerKind kind = LayerKind::sg,
                   double ratio = 2.0, int max_distance = 2, int kernel = 5,
                   int num_classes = 60, bool force = false);

/// Analytic complexity accounting. Parameter totals must equal a built
/// network's registry exactly; FLOPs follow the convention recorded in the
/// report (1 MAC = 1 FLOP; conv/FC/adjacency products only; adjacency
/// aggregation counted at the output width; bodies forward passes).
ComplexityReport count_params(const ArchPlan& plan, const ProfileOptions& options);
ComplexityReport count_flops(const ArchPlan& plan, const ProfileOptions& options);

struct SweepCell {
    int max_distance = 0;
    int kernel = 0;
    ComplexityReport report;
};

/// One complexity report per (D, L) pair over the template plan.
std::vector<SweepCell> receptive_sweep(const ArchPlan& plan_template,
                                       const std::vector<int>& distances,
                                       const std::vector<int>& kernels,
                                       const ProfileOptions& options);

std::string arch_plan_to_json(const ArchPlan& plan);
ArchPlan arch_plan_from_json(const std::string& text);
ArchPlan load_arch_plan(const std::string& path);
void save_arch_plan(const ArchPlan& plan, const std::string& path);

/// The reduction used inside an attention module: ratio-bearing layer kinds
/// (sg, bottle) share their channel ratio, the rest use 4.
double attention_ratio(LayerKind kind, double layer_ratio);

/// floor(c / ratio) with a floor of one channel.
int reduced_channels(int c, double ratio);

}  // namespace effgcn
