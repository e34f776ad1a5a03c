// Python bindings: plans and complexity profiles, skeleton graph utilities,
// preprocessing, the synthetic dataset generator, gradient checks and a thin
// Model wrapper over the float network (forward / train / evaluate / cam).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "effgcn/dataset.hpp"
#include "effgcn/gradcheck.hpp"
#include "effgcn/train.hpp"

namespace py = pybind11;
using namespace effgcn;

namespace {

template <typename S>
py::array_t<S> to_numpy(const Array<S>& a) {
    std::vector<py::ssize_t> shape(a.shape.begin(), a.shape.end());
    py::array_t<S> out(shape);
    std::copy(a.data.begin(), a.data.end(), out.mutable_data());
    return out;
}

template <typename S>
Array<S> from_numpy(const py::array_t<S, py::array::c_style | py::array::forcecast>& arr) {
    Shape shape;
    for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape.push_back(arr.shape(d));
    Array<S> out = Array<S>::uninit(std::move(shape));
    std::copy(arr.data(), arr.data() + arr.size(), out.data.begin());
    return out;
}

SkeletonGraph graph_from_dict(const py::dict& d) {
    SkeletonGraph g;
    g.num_joints = d["num_joints"].cast<int>();
    for (auto item : d["edges"].cast<py::list>()) {
        auto pair = item.cast<py::sequence>();
        g.edges.emplace_back(pair[0].cast<int>(), pair[1].cast<int>());
    }
    g.center = d["center"].cast<int>();
    g.parents = d["parents"].cast<std::vector<int>>();
    g.validate();
    return g;
}

py::dict graph_to_dict(const SkeletonGraph& g) {
    py::dict d;
    d["num_joints"] = g.num_joints;
    py::list edges;
    for (auto [a, b] : g.edges) edges.append(py::make_tuple(a, b));
    d["edges"] = std::move(edges);
    d["center"] = g.center;
    d["parents"] = g.parents;
    return d;
}

py::dict plan_to_dict(const ArchPlan& plan) {
    py::dict d;
    d["phi"] = plan.phi;
    d["alpha"] = plan.alpha;
    d["beta"] = plan.beta;
    d["layer_kind"] = to_string(plan.layer_kind);
    d["ratio"] = plan.ratio;
    d["D"] = plan.max_distance;
    d["L"] = plan.kernel;
    d["stage_channels"] = plan.stage_channels;
    d["stage_depths"] = plan.stage_depths;
    d["num_classes"] = plan.num_classes;
    return d;
}

ArchPlan plan_from_dict(const py::dict& d) {
    ArchPlan plan;
    plan.phi = d["phi"].cast<int>();
    plan.alpha = d["alpha"].cast<double>();
    plan.beta = d["beta"].cast<double>();
    plan.layer_kind = layer_kind_from_string(d["layer_kind"].cast<std::string>());
    plan.ratio = d["ratio"].cast<double>();
    plan.max_distance = d["D"].cast<int>();
    plan.kernel = d["L"].cast<int>();
    plan.stage_channels = d["stage_channels"].cast<std::vector<int>>();
    plan.stage_depths = d["stage_depths"].cast<std::vector<int>>();
    plan.num_classes = d["num_classes"].cast<int>();
    plan.validate();
    return plan;
}

py::dict report_to_dict(const ComplexityReport& report) {
    py::dict d;
    d["total_params"] = report.total_params;
    d["total_flops"] = report.total_flops;
    d["convention"] = report.convention;
    d["frames"] = report.frames;
    d["joints"] = report.joints;
    d["bodies"] = report.bodies;
    py::list blocks;
    for (const auto& b : report.blocks) {
        py::dict e;
        e["block"] = b.name;
        e["params"] = b.params;
        e["flops"] = b.flops;
        blocks.append(std::move(e));
    }
    d["blocks"] = std::move(blocks);
    return d;
}

ProfileOptions options_from_args(int frames, int joints, const std::string& attention,
                                 int branches, int bodies) {
    ProfileOptions opt;
    opt.frames = frames;
    opt.joints = joints;
    opt.attention = attention_from_string(attention);
    opt.branches = branches;
    opt.bodies = bodies;
    return opt;
}

RawSequence sequence_from_numpy(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& coords,
    std::optional<int> label) {
    RawSequence seq;
    seq.coords = from_numpy<double>(coords);
    seq.label = label;
    seq.valid_frames = seq.coords.shape.size() == 4 ? static_cast<int>(seq.coords.shape[1]) : 0;
    seq.validate();
    return seq;
}

/// Float network plus everything needed to feed it.
class Model {
public:
    Model(const py::dict& plan, const py::object& graph, const std::string& attention,
          int branches, int frames, std::uint64_t seed)
        : plan_(plan_from_dict(plan)),
          graph_(graph.is_none() ? ntu25_graph() : graph_from_dict(graph.cast<py::dict>())),
          net_(plan_, graph_, attention_from_string(attention), branches, frames, seed) {}

    std::uint64_t parameter_count() const { return net_.registry().total_params(); }

    py::list parameter_names() const {
        py::list names;
        for (const auto& p : net_.registry().parameters()) names.append(p.name);
        return names;
    }

    void load_checkpoint(const std::string& path) {
        net_.registry().load_state_dict(load_checkpoint_as<float>(path));
    }

    void save_checkpoint(const std::string& path) {
        save_checkpoint_typed<float>(path, net_.registry().state_dict());
    }

    /// inputs: list of [6, T, V] or [6, N, T, V] float arrays, one per branch.
    py::array_t<float> forward(const std::vector<py::array_t<
                                   float, py::array::c_style | py::array::forcecast>>& inputs) {
        NoGradGuard no_grad;
        std::vector<Tensor<float>> xs;
        for (const auto& arr : inputs) {
            Array<float> a = from_numpy<float>(arr);
            if (a.shape.size() == 3)
                a.shape = {a.shape[0], 1, a.shape[1], a.shape[2]};
            require(a.shape.size() == 4, "branch inputs must be [6, T, V] or [6, N, T, V]");
            xs.push_back(Tensor<float>::leaf(std::move(a)));
        }
        Ctx<float> ctx{Mode::eval, nullptr};
        return to_numpy(net_.forward(xs, ctx).value());
    }

    py::dict train_dir(const std::string& data_root, int epochs, int batch_size,
                       std::uint64_t seed, const std::string& out_dir, int warmup_epochs) {
        namespace fs = std::filesystem;
        const Dataset train_set = load_dataset_dir((fs::path(data_root) / "train").string());
        Dataset eval_set;
        const bool has_eval = fs::is_directory(fs::path(data_root) / "eval");
        if (has_eval) eval_set = load_dataset_dir((fs::path(data_root) / "eval").string());
        TrainConfig config;
        config.epochs = epochs;
        config.batch_size = batch_size;
        config.seed = seed;
        config.warmup_epochs = warmup_epochs;
        const auto result =
            train(net_, train_set, has_eval ? &eval_set : nullptr, graph_, config, out_dir);
        py::dict out;
        out["checkpoint"] = result.checkpoint_path;
        out["log"] = result.log_path;
        py::list log;
        for (const auto& e : result.log) {
            py::dict row;
            row["epoch"] = e.epoch;
            row["lr"] = e.lr;
            row["train_loss"] = e.train_loss;
            row["train_acc"] = e.train_acc;
            row["eval_acc"] = e.eval_acc;
            log.append(std::move(row));
        }
        out["epochs"] = std::move(log);
        return out;
    }

    py::dict evaluate_dir(const std::string& data_dir) {
        const Dataset data = load_dataset_dir(data_dir);
        const Metrics metrics = evaluate(net_, data, graph_);
        py::dict out;
        out["loss"] = metrics.loss;
        out["top1_accuracy"] = metrics.top1_accuracy;
        out["confusion"] = to_numpy(metrics.confusion);
        return out;
    }

    py::array_t<float> cam(
        const py::array_t<double, py::array::c_style | py::array::forcecast>& coords,
        int class_index) {
        const RawSequence seq = sequence_from_numpy(coords, std::nullopt);
        return to_numpy(class_activation_map(net_, seq, graph_, class_index));
    }

private:
    ArchPlan plan_;
    SkeletonGraph graph_;
    Network<float> net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Efficient graph-convolutional baselines for skeleton action recognition";

    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<StructureError>(m, "StructureError", PyExc_ValueError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

    m.def("step_round", &step_round, py::arg("x"));
    m.def("scale_channels", &scale_channels, py::arg("c0"), py::arg("alpha"), py::arg("phi"));
    m.def("scale_depth", &scale_depth, py::arg("l0"), py::arg("beta"), py::arg("phi"));
    m.def(
        "check_scaling_constraint",
        [](double alpha, double beta, double tolerance) {
            const auto c = check_scaling_constraint(alpha, beta, tolerance);
            return py::make_tuple(c.residual, c.pass);
        },
        py::arg("alpha"), py::arg("beta"), py::arg("tolerance") = 0.1);

    m.def(
        "make_plan",
        [](int phi, double alpha, double beta, const std::string& layer, double ratio,
           int max_distance, int kernel, int num_classes, bool half_channels, bool force) {
            ScalingConfig config;
            config.phi = phi;
            config.alpha = alpha;
            config.beta = beta;
            ArchPlan plan = make_arch(config, layer_kind_from_string(layer), ratio, max_distance,
                                      kernel, num_classes, force);
            if (half_channels)
                for (auto& c : plan.stage_channels) c = std::max(16, c / 2);
            return plan_to_dict(plan);
        },
        py::arg("phi") = 0, py::arg("alpha") = 1.2, py::arg("beta") = 1.35,
        py::arg("layer") = "sg", py::arg("ratio") = 2.0, py::arg("max_distance") = 2,
        py::arg("kernel") = 5, py::arg("num_classes") = 60, py::arg("half_channels") = false,
        py::arg("force") = false);

    m.def(
        "count_params",
        [](const py::dict& plan, int frames, int joints, const std::string& attention,
           int branches, int bodies) {
            return report_to_dict(count_params(
                plan_from_dict(plan),
                options_from_args(frames, joints, attention, branches, bodies)));
        },
        py::arg("plan"), py::arg("frames") = 300, py::arg("joints") = 25,
        py::arg("attention") = "st_joint", py::arg("branches") = 3, py::arg("bodies") = 2);
    m.def(
        "count_flops",
        [](const py::dict& plan, int frames, int joints, const std::string& attention,
           int branches, int bodies) {
            return report_to_dict(count_flops(
                plan_from_dict(plan),
                options_from_args(frames, joints, attention, branches, bodies)));
        },
        py::arg("plan"), py::arg("frames") = 300, py::arg("joints") = 25,
        py::arg("attention") = "st_joint", py::arg("branches") = 3, py::arg("bodies") = 2);

    m.def("ntu25_graph", [] { return graph_to_dict(ntu25_graph()); });
    m.def(
        "hop_distances",
        [](const py::dict& graph) { return to_numpy(hop_distances(graph_from_dict(graph))); },
        py::arg("graph"));
    m.def(
        "build_partitions",
        [](const py::dict& graph, int max_distance) {
            const auto parts = build_partitions(graph_from_dict(graph), max_distance);
            py::list raw, normalized;
            for (const auto& p : parts.partitions) raw.append(to_numpy(p));
            for (const auto& n : parts.normalized) normalized.append(to_numpy(n));
            return py::make_tuple(std::move(raw), std::move(normalized));
        },
        py::arg("graph"), py::arg("max_distance"));
    m.def(
        "normalize_partition",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           double eps_deg) { return to_numpy(normalize_partition(from_numpy<double>(a), eps_deg)); },
        py::arg("partition"), py::arg("eps_deg") = 1e-6);

    m.def(
        "assemble_branches",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& coords,
           const py::object& graph) {
            const SkeletonGraph g =
                graph.is_none() ? ntu25_graph() : graph_from_dict(graph.cast<py::dict>());
            const RawSequence seq = sequence_from_numpy(coords, std::nullopt);
            py::list out;
            for (const auto& b : assemble_branches(seq, g)) {
                py::dict body;
                body["joint"] = to_numpy(b.joint);
                body["velocity"] = to_numpy(b.velocity);
                body["bone"] = to_numpy(b.bone);
                out.append(std::move(body));
            }
            return out;
        },
        py::arg("coords"), py::arg("graph") = py::none());

    m.def(
        "write_synth_dataset",
        [](const std::string& out_dir, int num_classes, int samples_per_class, int frames,
           int joints, std::uint64_t seed) {
            save_dataset_dir(synth_dataset(num_classes, samples_per_class, frames, joints, seed),
                             out_dir);
        },
        py::arg("out_dir"), py::arg("num_classes") = 4, py::arg("samples_per_class") = 100,
        py::arg("frames") = 60, py::arg("joints") = 25, py::arg("seed") = 0);

    m.def(
        "gradcheck",
        [](const std::string& unit, double tolerance, std::uint64_t seed) {
            const auto report = gradcheck_unit(unit, tolerance, seed);
            py::dict d;
            d["all_pass"] = report.all_pass;
            d["tolerance"] = report.tolerance;
            py::list entries;
            for (const auto& e : report.entries) {
                py::dict entry;
                entry["name"] = e.name;
                entry["max_rel_err"] = e.max_rel_err;
                entry["pass"] = e.pass;
                entries.append(std::move(entry));
            }
            d["entries"] = std::move(entries);
            return d;
        },
        py::arg("unit"), py::arg("tolerance") = 1e-5, py::arg("seed") = 0);

    py::class_<Model>(m, "Model")
        .def(py::init<const py::dict&, const py::object&, const std::string&, int, int,
                      std::uint64_t>(),
             py::arg("plan"), py::arg("graph") = py::none(), py::arg("attention") = "st_joint",
             py::arg("branches") = 3, py::arg("frames") = 300, py::arg("seed") = 0)
        .def("parameter_count", &Model::parameter_count)
        .def("parameter_names", &Model::parameter_names)
        .def("load_checkpoint", &Model::load_checkpoint, py::arg("path"))
        .def("save_checkpoint", &Model::save_checkpoint, py::arg("path"))
        .def("forward", &Model::forward, py::arg("inputs"))
        .def("train_dir", &Model::train_dir, py::arg("data_root"), py::arg("epochs") = 30,
             py::arg("batch_size") = 16, py::arg("seed") = 0, py::arg("out_dir") = "effgcn_run",
             py::arg("warmup_epochs") = 10)
        .def("evaluate_dir", &Model::evaluate_dir, py::arg("data_dir"))
        .def("cam", &Model::cam, py::arg("coords"), py::arg("class_index"));
}
