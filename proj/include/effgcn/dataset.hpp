#pragma once

#include <string>
#include <vector>

#include "effgcn/preprocess.hpp"

namespace effgcn {

/// An ordered collection of sequences; ids double as file stems on disk.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<RawSequence> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

/// Reads every *.sktn under dir (sorted by name) with its sidecar.
Dataset load_dataset_dir(const std::string& dir);

/// Writes <dir>/<id>.sktn plus sidecars.
void save_dataset_dir(const Dataset& data, const std::string& dir);

/// Deterministic synthetic action set: every class oscillates its own joint
/// subset with its own frequency, amplitude and direction on a shared rest
/// pose; per-sample variation is a small phase/amplitude jitter plus
/// coordinate noise. Labels cycle class-by-class so they are uniform.
Dataset synth_dataset(int num_classes, int samples_per_class, int frames, int joints,
                      std::uint64_t seed);

/// Expands every sequence into the three input streams and writes one tensor
/// per sample shaped [M, 3, 6, T, V] (body, stream, channel, frame, joint).
void preprocess_dataset_dir(const std::string& in_dir, const SkeletonGraph& graph,
                            const std::string& out_dir);

}  // namespace effgcn
