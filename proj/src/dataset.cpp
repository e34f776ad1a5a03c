#include "effgcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "effgcn/rng.hpp"
#include "effgcn/serialize.hpp"

namespace fs = std::filesystem;

namespace effgcn {

Dataset load_dataset_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".sktn")
            stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    Dataset data;
    for (const auto& stem : stems) {
        data.ids.push_back(stem);
        data.items.push_back(load_sequence((fs::path(dir) / (stem + ".sktn")).string()));
    }
    return data;
}

void save_dataset_dir(const Dataset& data, const std::string& dir) {
    require(data.ids.size() == data.items.size(), "dataset ids and items must align");
    fs::create_directories(dir);
    for (std::size_t i = 0; i < data.items.size(); ++i)
        save_sequence(data.items[i], (fs::path(dir) / (data.ids[i] + ".sktn")).string());
}

Dataset synth_dataset(int num_classes, int samples_per_class, int frames, int joints,
                      std::uint64_t seed) {
    require(num_classes >= 2, "the synthetic set needs at least two classes");
    require(samples_per_class >= 1 && frames >= 3 && joints >= 1,
            "samples_per_class, frames and joints must be positive (frames >= 3)");
    Rng rng = Rng(seed).fork("synth");

    // Shared rest pose.
    std::vector<double> rest(static_cast<std::size_t>(3 * joints));
    for (auto& v : rest) v = rng.uniform(-0.5, 0.5);

    Dataset data;
    for (int k = 0; k < num_classes; ++k) {
        // Class signature: joint subset, frequency, phase and direction.
        const double omega = 0.25 + 0.9 * static_cast<double>(k) / num_classes;
        const double phase0 = 0.8 * k;
        double dir[3] = {std::cos(2.4 * k + 0.7), std::sin(1.7 * k + 0.3),
                         std::cos(3.1 * k + 1.9)};
        const double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        for (double& d : dir) d /= dn;

        for (int i = 0; i < samples_per_class; ++i) {
            const double phase = phase0 + 0.05 * rng.normal();
            const double amp = 0.5 * (1.0 + 0.05 * rng.normal());
            RawSequence seq;
            seq.coords = Array<double>::zeros({3, frames, joints, 1});
            seq.label = k;
            seq.valid_frames = frames;
            for (int c = 0; c < 3; ++c) {
                for (int t = 0; t < frames; ++t) {
                    for (int v = 0; v < joints; ++v) {
                        double value = rest[static_cast<std::size_t>(c * joints + v)] +
                                       0.02 * rng.normal();
                        if (v % num_classes == k)
                            value += amp * std::sin(omega * t + phase) * dir[c];
                        seq.coords
                            .data[static_cast<std::size_t>((c * frames + t) * joints + v)] =
                            value;
                    }
                }
            }
            char id[64];
            std::snprintf(id, sizeof(id), "class%02d_%04d", k, i);
            data.ids.emplace_back(id);
            data.items.push_back(std::move(seq));
        }
    }
    return data;
}

void preprocess_dataset_dir(const std::string& in_dir, const SkeletonGraph& graph,
                            const std::string& out_dir) {
    const Dataset data = load_dataset_dir(in_dir);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < data.items.size(); ++i) {
        const auto& seq = data.items[i];
        const auto branches = assemble_branches(seq, graph);
        const int m = seq.bodies(), t = seq.frames(), v = seq.joints();
        Array<double> packed = Array<double>::zeros({m, 3, 6, t, v});
        const std::int64_t stream = static_cast<std::int64_t>(6) * t * v;
        for (int body = 0; body < m; ++body) {
            double* base = packed.ptr() + static_cast<std::int64_t>(body) * 3 * stream;
            const auto& b = branches[static_cast<std::size_t>(body)];
            std::memcpy(base, b.joint.ptr(), sizeof(double) * static_cast<std::size_t>(stream));
            std::memcpy(base + stream, b.velocity.ptr(),
                        sizeof(double) * static_cast<std::size_t>(stream));
            std::memcpy(base + 2 * stream, b.bone.ptr(),
                        sizeof(double) * static_cast<std::size_t>(stream));
        }
        const auto out_path = fs::path(out_dir) / (data.ids[i] + ".branches.sktn");
        save_sktn(out_path.string(), packed);
        SequenceMeta meta{seq.label, seq.valid_frames};
        save_meta_json(meta, out_path.string() + ".meta.json");
    }
}

}  // namespace effgcn
