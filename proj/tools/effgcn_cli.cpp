// Command-line front end: architecture plans, complexity profiles, gradient
// checks, preprocessing, synthetic data, training, evaluation, activation
// maps and receptive-field sweeps.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <algorithm>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "effgcn/dataset.hpp"
#include "effgcn/gradcheck.hpp"
#include "effgcn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace effgcn;

namespace {

struct PlanFlags {
    int phi = 0;
    double alpha = 1.2;
    double beta = 1.35;
    std::string layer = "sg";
    double ratio = 2.0;
    int max_distance = 2;
    int kernel = 5;
    int classes = 60;
    bool half_channels = false;
    bool force = false;
    std::string plan_path;

    void attach(CLI::App* cmd, bool with_plan_file = true) {
        cmd->add_option("--phi", phi, "compound scaling coefficient");
        cmd->add_option("--alpha", alpha, "width multiplier base (default 1.2)");
        cmd->add_option("--beta", beta, "depth multiplier base (default 1.35)");
        cmd->add_option("--layer", layer, "temporal layer kind")
            ->check(CLI::IsMember({"basic", "bottle", "sep", "epsep", "sg"}));
        cmd->add_option("--ratio", ratio, "channel reduction/expansion ratio");
        cmd->add_option("--max-distance", max_distance, "max graph distance D");
        cmd->add_option("--kernel", kernel, "temporal window size L");
        cmd->add_option("--classes", classes, "number of action classes");
        cmd->add_flag("--half-channels", half_channels,
                      "halve the four stage widths (desk-scale config)");
        cmd->add_flag("--force", force, "build even if alpha^2*beta misses 2");
        if (with_plan_file)
            cmd->add_option("--plan", plan_path, "read the architecture plan from a JSON file");
    }

    ArchPlan resolve() const {
        if (!plan_path.empty()) return load_arch_plan(plan_path);
        ScalingConfig config;
        config.phi = phi;
        config.alpha = alpha;
        config.beta = beta;
        ArchPlan plan = make_arch(config, layer_kind_from_string(layer), ratio, max_distance,
                                  kernel, classes, force);
        if (half_channels)
            for (auto& c : plan.stage_channels) c = std::max(16, c / 2);
        return plan;
    }
};

SkeletonGraph resolve_graph(const std::string& path) {
    return path.empty() ? ntu25_graph() : load_graph_json(path);
}

void ensure_out_dir(const std::string& out) {
    if (!out.empty()) fs::create_directories(out);
}

json plan_as_json(const ArchPlan& plan) { return json::parse(arch_plan_to_json(plan)); }

void print_plan_table(const ArchPlan& plan, std::ostream& os) {
    const std::string kind = to_string(plan.layer_kind);
    os << "phi " << plan.phi << "  alpha " << plan.alpha << "  beta " << plan.beta << "  layer "
       << kind << "  ratio " << plan.ratio << "  D " << plan.max_distance << "  L "
       << plan.kernel << "  classes " << plan.num_classes << "\n";
    auto row = [&os](const std::string& stage, const std::string& block,
                     const std::string& depth, const std::string& channels) {
        os << std::left << std::setw(7) << stage << std::setw(18) << block << std::setw(7)
           << depth << channels << "\n";
    };
    row("stage", "block", "depth", "channels");
    row("-", "input-bn x3", "-",
        "(" + std::to_string(plan.input_channels) + ", " + std::to_string(plan.input_channels) +
            ")");
    row("-", "basic-stem x3", "1",
        "(" + std::to_string(plan.input_channels) + ", " + std::to_string(plan.init_channels) +
            ")");
    const auto& c = plan.stage_channels;
    const auto& d = plan.stage_depths;
    row("1", kind + "-block x3", std::to_string(d[0]),
        "(" + std::to_string(plan.init_channels) + ", " + std::to_string(c[0]) + ")");
    row("2", kind + "-block x3", std::to_string(d[1]),
        "(" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + ")");
    row("-", "concat", "-", std::to_string(c[1]) + "x3 -> " + std::to_string(3 * c[1]));
    row("3", kind + "-block", std::to_string(d[2]),
        "(" + std::to_string(3 * c[1]) + ", " + std::to_string(c[2]) + ") /2");
    row("4", kind + "-block", std::to_string(d[3]),
        "(" + std::to_string(c[2]) + ", " + std::to_string(c[3]) + ") /2");
    row("-", "gap + fc", "-",
        "(" + std::to_string(c[3]) + ", " + std::to_string(plan.num_classes) + ")");
}

json report_as_json(const ComplexityReport& report) {
    json j;
    j["convention"] = report.convention;
    j["frames"] = report.frames;
    j["joints"] = report.joints;
    j["bodies"] = report.bodies;
    j["total_params"] = report.total_params;
    j["total_flops"] = report.total_flops;
    auto blocks = json::array();
    for (const auto& b : report.blocks)
        blocks.push_back({{"block", b.name}, {"params", b.params}, {"flops", b.flops}});
    j["blocks"] = std::move(blocks);
    return j;
}

void write_report_csv(const ComplexityReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path, 0);
    out << "# " << report.convention << "\n";
    out << "block,params,flops\n";
    for (const auto& b : report.blocks)
        out << b.name << ',' << b.params << ',' << b.flops << '\n';
    out << "total," << report.total_params << ',' << report.total_flops << '\n';
}

template <typename S>
Network<S> build_network(const ArchPlan& plan, const SkeletonGraph& graph,
                         const std::string& attention, int branches, int frames,
                         std::uint64_t seed, double dropout = 0.25) {
    return Network<S>(plan, graph, attention_from_string(attention), branches, frames, seed,
                      dropout);
}

int run_plan(const PlanFlags& flags, bool as_json, const std::string& out) {
    const ArchPlan plan = flags.resolve();
    if (as_json)
        std::cout << plan_as_json(plan).dump(2) << "\n";
    else
        print_plan_table(plan, std::cout);
    if (!out.empty()) {
        ensure_out_dir(out);
        save_arch_plan(plan, (fs::path(out) / "plan.json").string());
    }
    return 0;
}

int run_profile(const PlanFlags& flags, const ProfileOptions& options, bool as_json,
                const std::string& out) {
    const ArchPlan plan = flags.resolve();
    const ComplexityReport report = count_params(plan, options);
    if (as_json) {
        std::cout << report_as_json(report).dump(2) << "\n";
    } else {
        std::cout << "# " << report.convention << "\n";
        std::cout << "block,params,flops\n";
        for (const auto& b : report.blocks)
            std::cout << b.name << ',' << b.params << ',' << b.flops << '\n';
        std::cout << "total," << report.total_params << ',' << report.total_flops << '\n';
        std::cout << std::setprecision(4) << "params " << report.total_params / 1e6
                  << "M, flops " << report.total_flops / 1e9 << "G\n";
    }
    if (!out.empty()) {
        ensure_out_dir(out);
        write_report_csv(report, (fs::path(out) / "profile.csv").string());
    }
    return 0;
}

int run_gradcheck(const std::string& unit, const std::string& dtype, double tol,
                  std::uint64_t seed, bool as_json) {
    require(dtype == "f64", "gradient checking runs in f64; pass --dtype f64");
    const GradCheckReport report = gradcheck_unit(unit, tol, seed);
    if (as_json) {
        json j;
        j["unit"] = unit;
        j["tolerance"] = report.tolerance;
        j["all_pass"] = report.all_pass;
        auto entries = json::array();
        for (const auto& e : report.entries)
            entries.push_back(
                {{"name", e.name}, {"max_rel_err", e.max_rel_err}, {"pass", e.pass}});
        j["entries"] = std::move(entries);
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& e : report.entries)
            std::cout << (e.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(40)
                      << e.name << "  max_rel_err " << std::scientific << std::setprecision(3)
                      << e.max_rel_err << std::defaultfloat << "\n";
        std::cout << (report.all_pass ? "PASS" : "FAIL") << "  " << unit << " at tolerance "
                  << report.tolerance << "\n";
    }
    return report.all_pass ? 0 : 2;
}

int run_synth(int classes, int per_class, int eval_per_class, int frames, int joints,
              std::uint64_t seed, const std::string& out) {
    require(!out.empty(), "synth needs --out DIR");
    // One generator pass; the first per_class samples of each class form the
    // training split and the rest are held out.
    const Dataset all = synth_dataset(classes, per_class + eval_per_class, frames, joints, seed);
    Dataset train_set, eval_set;
    const int chunk = per_class + eval_per_class;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const bool held_out = static_cast<int>(i) % chunk >= per_class;
        Dataset& target = held_out ? eval_set : train_set;
        target.ids.push_back(all.ids[i]);
        target.items.push_back(all.items[i]);
    }
    save_dataset_dir(train_set, (fs::path(out) / "train").string());
    if (eval_per_class > 0) save_dataset_dir(eval_set, (fs::path(out) / "eval").string());
    std::cout << "wrote " << train_set.size() << " train sequences"
              << (eval_per_class > 0
                      ? " and " + std::to_string(eval_set.size()) + " eval sequences"
                      : "")
              << " under " << out << "\n";
    return 0;
}

int run_preprocess(const std::string& data, const std::string& graph_path,
                   const std::string& out) {
    require(!data.empty() && !out.empty(), "preprocess needs --data DIR and --out DIR");
    const SkeletonGraph graph = resolve_graph(graph_path);
    preprocess_dataset_dir(data, graph, out);
    std::cout << "wrote branch tensors to " << out << "\n";
    return 0;
}

template <typename S>
int run_train_typed(const PlanFlags& flags, const std::string& data,
                    const std::string& graph_path, const std::string& out,
                    const std::string& attention, int branches, int frames, TrainConfig config) {
    require(!data.empty() && !out.empty(), "train needs --data DIR and --out DIR");
    ArchPlan plan = flags.resolve();
    const SkeletonGraph graph = resolve_graph(graph_path);
    const Dataset train_set = load_dataset_dir((fs::path(data) / "train").string());
    Dataset eval_set;
    const bool has_eval = fs::is_directory(fs::path(data) / "eval");
    if (has_eval) eval_set = load_dataset_dir((fs::path(data) / "eval").string());

    config.dropout = 0.25;
    Network<S> net =
        build_network<S>(plan, graph, attention, branches, frames, config.seed, config.dropout);
    ensure_out_dir(out);
    const auto result =
        train(net, train_set, has_eval ? &eval_set : nullptr, graph, config, out);
    const auto& last = result.log.back();
    std::cout << "trained " << config.epochs << " epochs: train_acc " << last.train_acc
              << ", eval_acc " << last.eval_acc << "\n";
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    std::cout << "log: " << result.log_path << "\n";
    return 0;
}

template <typename S>
int run_eval_typed(const PlanFlags& flags, const std::string& data, const std::string& ckpt,
                   const std::string& graph_path, const std::string& attention, int branches,
                   int frames, std::uint64_t seed, bool as_json, const std::string& out) {
    require(!data.empty() && !ckpt.empty(), "eval needs --data DIR and --ckpt PATH");
    const ArchPlan plan = flags.resolve();
    const SkeletonGraph graph = resolve_graph(graph_path);
    Network<S> net = build_network<S>(plan, graph, attention, branches, frames, seed);
    net.registry().load_state_dict(load_checkpoint_as<S>(ckpt));
    const Dataset data_set = load_dataset_dir(data);
    const Metrics metrics = evaluate(net, data_set, graph);
    if (as_json) {
        json j;
        j["loss"] = metrics.loss;
        j["top1_accuracy"] = metrics.top1_accuracy;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "loss " << metrics.loss << ", top1 " << metrics.top1_accuracy << " over "
                  << data_set.size() << " sequences\n";
    }
    if (!out.empty()) {
        ensure_out_dir(out);
        const int q = plan.num_classes;
        std::ofstream cm((fs::path(out) / "confusion.csv").string());
        cm << "# rows = truth, columns = prediction\n";
        for (int r = 0; r < q; ++r) {
            for (int c = 0; c < q; ++c)
                cm << metrics.confusion.data[static_cast<std::size_t>(r * q + c)]
                   << (c + 1 == q ? '\n' : ',');
        }
    }
    return 0;
}

template <typename S>
int run_cam_typed(const PlanFlags& flags, const std::string& data, const std::string& ckpt,
                  const std::string& graph_path, const std::string& attention, int branches,
                  int frames, std::uint64_t seed, int target_class, const std::string& out) {
    require(!data.empty() && !ckpt.empty(), "cam needs --data FILE.sktn and --ckpt PATH");
    const ArchPlan plan = flags.resolve();
    const SkeletonGraph graph = resolve_graph(graph_path);
    Network<S> net = build_network<S>(plan, graph, attention, branches, frames, seed);
    net.registry().load_state_dict(load_checkpoint_as<S>(ckpt));
    const RawSequence seq = load_sequence(data);

    int cls = target_class;
    if (cls < 0) {
        Dataset single;
        single.ids.push_back("sample");
        single.items.push_back(seq);
        single.items.back().label = 0;
        NoGradGuard no_grad;
        std::vector<std::size_t> idx{0};
        Batch<S> batch = make_batch<S>(single, idx, graph, frames, net.branches());
        Ctx<S> ctx{Mode::eval, nullptr};
        Tensor<S> logits = group_mean_cols(net.forward(batch.inputs, ctx), batch.groups);
        const S* zp = logits.value().ptr();
        cls = 0;
        for (int r = 1; r < plan.num_classes; ++r)
            if (zp[r] > zp[cls]) cls = r;
    }
    const Array<S> map = class_activation_map(net, seq, graph, cls);
    std::cout << "class " << cls << ", map " << map.shape[0] << "x" << map.shape[1] << "\n";
    if (!out.empty()) {
        ensure_out_dir(out);
        std::ofstream f((fs::path(out) / "cam.csv").string());
        f << "# class " << cls << "; rows = frames, columns = joints\n";
        for (std::int64_t t = 0; t < map.shape[0]; ++t) {
            for (std::int64_t v = 0; v < map.shape[1]; ++v)
                f << map.data[static_cast<std::size_t>(t * map.shape[1] + v)]
                  << (v + 1 == map.shape[1] ? '\n' : ',');
        }
    }
    return 0;
}

int run_sweep(const PlanFlags& flags, const ProfileOptions& options, int d_min, int d_max,
              const std::string& l_list, bool as_json, const std::string& out) {
    require(d_min >= 0 && d_max >= d_min, "sweep needs 0 <= d-min <= d-max");
    std::vector<int> distances;
    for (int d = d_min; d <= d_max; ++d) distances.push_back(d);
    std::vector<int> kernels;
    std::stringstream ss(l_list);
    for (std::string item; std::getline(ss, item, ',');) kernels.push_back(std::stoi(item));
    const ArchPlan plan = flags.resolve();
    const auto cells = receptive_sweep(plan, distances, kernels, options);

    if (as_json) {
        auto rows = json::array();
        for (const auto& cell : cells)
            rows.push_back({{"D", cell.max_distance},
                            {"L", cell.kernel},
                            {"params", cell.report.total_params},
                            {"flops", cell.report.total_flops}});
        json j;
        j["convention"] = cells.front().report.convention;
        j["cells"] = std::move(rows);
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "# " << cells.front().report.convention << "\n";
        std::cout << "D,L,params,flops\n";
        for (const auto& cell : cells)
            std::cout << cell.max_distance << ',' << cell.kernel << ','
                      << cell.report.total_params << ',' << cell.report.total_flops << '\n';
    }
    if (!out.empty()) {
        ensure_out_dir(out);
        std::ofstream f((fs::path(out) / "sweep.csv").string());
        f << "# " << cells.front().report.convention << "\n";
        f << "D,L,params,flops\n";
        for (const auto& cell : cells)
            f << cell.max_distance << ',' << cell.kernel << ',' << cell.report.total_params
              << ',' << cell.report.total_flops << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EfficientGCN-style skeleton action recognition toolkit"};
    app.require_subcommand(1);

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "compound-scaled architecture plan");
    PlanFlags plan_flags;
    plan_flags.attach(plan_cmd, false);
    bool plan_json_out = false;
    std::string plan_out;
    plan_cmd->add_flag("--json", plan_json_out, "machine-readable output");
    plan_cmd->add_option("--out", plan_out, "directory for plan.json");

    // profile
    auto* prof_cmd = app.add_subcommand("profile", "analytic parameter/FLOPs report");
    PlanFlags prof_flags;
    prof_flags.attach(prof_cmd);
    ProfileOptions prof_opt;
    bool prof_json_out = false;
    std::string prof_out, prof_att = "st_joint";
    prof_cmd->add_option("--frames", prof_opt.frames, "frames T (default 300)");
    prof_cmd->add_option("--joints", prof_opt.joints, "joints V (default 25)");
    prof_cmd->add_option("--branches", prof_opt.branches, "input branches 1..3");
    prof_cmd->add_option("--bodies", prof_opt.bodies, "bodies per sequence (default 2)");
    prof_cmd->add_option("--attention", prof_att, "attention kind")
        ->check(CLI::IsMember({"none", "st_joint", "channel", "frame", "joint"}));
    prof_cmd->add_flag("--json", prof_json_out, "machine-readable output");
    prof_cmd->add_option("--out", prof_out, "directory for profile.csv");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    std::string grad_unit = "network", grad_dtype = "f64";
    double grad_tol = 1e-5;
    std::uint64_t grad_seed = 0;
    bool grad_json = false;
    grad_cmd->add_option("--layer", grad_unit, "unit to check")
        ->check(CLI::IsMember({"basic", "bottle", "sep", "epsep", "sg", "sgc", "stja", "channel",
                               "frame", "joint", "bn", "fc", "network"}));
    grad_cmd->add_option("--dtype", grad_dtype, "must be f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    grad_cmd->add_option("--tol", grad_tol, "relative tolerance (default 1e-5)");
    grad_cmd->add_option("--seed", grad_seed, "rng seed");
    grad_cmd->add_flag("--json", grad_json, "machine-readable output");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    int synth_classes = 4, synth_per_class = 100, synth_eval_per_class = 25, synth_frames = 60,
        synth_joints = 25;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth_cmd->add_option("--classes", synth_classes, "number of classes (default 4)");
    synth_cmd->add_option("--per-class", synth_per_class, "train sequences per class");
    synth_cmd->add_option("--eval-per-class", synth_eval_per_class,
                          "held-out sequences per class (0 disables)");
    synth_cmd->add_option("--frames", synth_frames, "frames per sequence");
    synth_cmd->add_option("--joints", synth_joints, "joints per skeleton");
    synth_cmd->add_option("--seed", synth_seed, "rng seed");
    synth_cmd->add_option("--out", synth_out, "output dataset root")->required();

    // preprocess
    auto* prep_cmd = app.add_subcommand("preprocess", "expand sequences into input branches");
    std::string prep_data, prep_graph, prep_out;
    prep_cmd->add_option("--data", prep_data, "directory of .sktn sequences")->required();
    prep_cmd->add_option("--graph", prep_graph, "skeleton graph JSON (default: built-in 25-joint)");
    prep_cmd->add_option("--out", prep_out, "output directory")->required();

    // shared train/eval/cam flags
    auto add_net_flags = [](CLI::App* cmd, std::string& data, std::string& graph,
                            std::string& att, int& branches, int& frames, std::string& dtype,
                            std::uint64_t& seed) {
        cmd->add_option("--data", data);
        cmd->add_option("--graph", graph, "skeleton graph JSON (default: built-in 25-joint)");
        cmd->add_option("--attention", att, "attention kind")
            ->check(CLI::IsMember({"none", "st_joint", "channel", "frame", "joint"}));
        cmd->add_option("--branches", branches, "input branches 1..3");
        cmd->add_option("--frames", frames, "frames the network consumes");
        cmd->add_option("--dtype", dtype)->check(CLI::IsMember({"f32", "f64"}));
        cmd->add_option("--seed", seed, "rng seed (default 0)");
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "desk-scale training run");
    PlanFlags train_flags;
    train_flags.attach(train_cmd);
    std::string train_data, train_graph, train_att = "st_joint", train_dtype = "f32", train_out;
    int train_branches = 3, train_frames = 300;
    std::uint64_t train_seed = 0;
    TrainConfig train_config;
    add_net_flags(train_cmd, train_data, train_graph, train_att, train_branches, train_frames,
                  train_dtype, train_seed);
    train_cmd->add_option("--epochs", train_config.epochs, "training epochs (default 70)");
    train_cmd->add_option("--batch", train_config.batch_size, "batch size (default 16)");
    auto* warmup_opt =
        train_cmd->add_option("--warmup", train_config.warmup_epochs,
                              "linear warmup epochs (default 10, clamped to short runs)");
    train_cmd->add_option("--out", train_out, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    PlanFlags eval_flags;
    eval_flags.attach(eval_cmd);
    std::string eval_data, eval_graph, eval_att = "st_joint", eval_dtype = "f32", eval_out,
                eval_ckpt;
    int eval_branches = 3, eval_frames = 300;
    std::uint64_t eval_seed = 0;
    bool eval_json = false;
    add_net_flags(eval_cmd, eval_data, eval_graph, eval_att, eval_branches, eval_frames,
                  eval_dtype, eval_seed);
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_flag("--json", eval_json, "machine-readable output");
    eval_cmd->add_option("--out", eval_out, "directory for confusion.csv");

    // cam
    auto* cam_cmd = app.add_subcommand("cam", "class activation map for one sequence");
    PlanFlags cam_flags;
    cam_flags.attach(cam_cmd);
    std::string cam_data, cam_graph, cam_att = "st_joint", cam_dtype = "f32", cam_out, cam_ckpt;
    int cam_branches = 3, cam_frames = 300, cam_target = -1;
    std::uint64_t cam_seed = 0;
    add_net_flags(cam_cmd, cam_data, cam_graph, cam_att, cam_branches, cam_frames, cam_dtype,
                  cam_seed);
    cam_cmd->add_option("--ckpt", cam_ckpt, "checkpoint path")->required();
    cam_cmd->add_option("--target-class", cam_target,
                        "class index (default: predicted class)");
    cam_cmd->add_option("--out", cam_out, "directory for cam.csv");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "receptive-field complexity grid");
    PlanFlags sweep_flags;
    sweep_flags.attach(sweep_cmd);
    ProfileOptions sweep_opt;
    std::string sweep_out, sweep_att = "st_joint", sweep_l_list = "3,5,7,9,11";
    int sweep_d_min = 1, sweep_d_max = 5;
    bool sweep_json = false;
    sweep_cmd->add_option("--frames", sweep_opt.frames, "frames T (default 300)");
    sweep_cmd->add_option("--joints", sweep_opt.joints, "joints V (default 25)");
    sweep_cmd->add_option("--branches", sweep_opt.branches, "input branches 1..3");
    sweep_cmd->add_option("--bodies", sweep_opt.bodies, "bodies per sequence (default 2)");
    sweep_cmd->add_option("--attention", sweep_att, "attention kind");
    sweep_cmd->add_option("--d-min", sweep_d_min, "smallest D");
    sweep_cmd->add_option("--d-max", sweep_d_max, "largest D");
    sweep_cmd->add_option("--l-list", sweep_l_list, "comma-separated kernel sizes");
    sweep_cmd->add_flag("--json", sweep_json, "machine-readable output");
    sweep_cmd->add_option("--out", sweep_out, "directory for sweep.csv");

    try {
        app.parse(argc, argv);

        if (plan_cmd->parsed()) return run_plan(plan_flags, plan_json_out, plan_out);
        if (prof_cmd->parsed()) {
            prof_opt.attention = attention_from_string(prof_att);
            return run_profile(prof_flags, prof_opt, prof_json_out, prof_out);
        }
        if (grad_cmd->parsed())
            return run_gradcheck(grad_unit, grad_dtype, grad_tol, grad_seed, grad_json);
        if (synth_cmd->parsed())
            return run_synth(synth_classes, synth_per_class, synth_eval_per_class, synth_frames,
                             synth_joints, synth_seed, synth_out);
        if (prep_cmd->parsed()) return run_preprocess(prep_data, prep_graph, prep_out);
        if (train_cmd->parsed()) {
            train_config.seed = train_seed;
            if (warmup_opt->count() == 0)
                train_config.warmup_epochs =
                    std::min(train_config.warmup_epochs, std::max(0, train_config.epochs - 1));
            if (train_dtype == "f64")
                return run_train_typed<double>(train_flags, train_data, train_graph, train_out,
                                               train_att, train_branches, train_frames,
                                               train_config);
            return run_train_typed<float>(train_flags, train_data, train_graph, train_out,
                                          train_att, train_branches, train_frames, train_config);
        }
        if (eval_cmd->parsed()) {
            if (eval_dtype == "f64")
                return run_eval_typed<double>(eval_flags, eval_data, eval_ckpt, eval_graph,
                                              eval_att, eval_branches, eval_frames, eval_seed,
                                              eval_json, eval_out);
            return run_eval_typed<float>(eval_flags, eval_data, eval_ckpt, eval_graph, eval_att,
                                         eval_branches, eval_frames, eval_seed, eval_json,
                                         eval_out);
        }
        if (cam_cmd->parsed()) {
            if (cam_dtype == "f64")
                return run_cam_typed<double>(cam_flags, cam_data, cam_ckpt, cam_graph, cam_att,
                                             cam_branches, cam_frames, cam_seed, cam_target,
                                             cam_out);
            return run_cam_typed<float>(cam_flags, cam_data, cam_ckpt, cam_graph, cam_att,
                                        cam_branches, cam_frames, cam_seed, cam_target, cam_out);
        }
        if (sweep_cmd->parsed()) {
            sweep_opt.attention = attention_from_string(sweep_att);
            return run_sweep(sweep_flags, sweep_opt, sweep_d_min, sweep_d_max, sweep_l_list,
                             sweep_json, sweep_out);
        }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
