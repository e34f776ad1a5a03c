#pragma once

#include <string>
#include <utility>
#include <vector>

#include "effgcn/common.hpp"
#include "effgcn/tensor.hpp"

namespace effgcn {

/// Undirected skeleton topology. Joint indices are 0-based; `parents` maps
/// every joint to its neighbor one step toward `center` (the center maps to
/// itself), which defines the bone vectors.
struct SkeletonGraph {
    int num_joints = 0;
    std::vector<std::pair<int, int>> edges;
    int center = 0;
    std::vector<int> parents;

    /// Throws when any declared invariant is violated (index ranges,
    /// connectivity, parent chains terminating at the center).
    void validate() const;
};

/// Distance-based adjacency partitions A_0..A_D plus their symmetric
/// degree-normalized forms. Partitions are pairwise disjoint binary
/// matrices; A_0 is the identity.
struct PartitionedAdjacency {
    int max_distance = 0;
    std::vector<Array<double>> partitions;
    std::vector<Array<double>> normalized;
};

/// All-pairs shortest edge-path lengths (V x V, symmetric, zero diagonal).
/// A disconnected graph raises StructureError naming an unreachable pair.
Array<int> hop_distances(const SkeletonGraph& graph);

/// Binary partition matrices for hop distances 0..max_distance together with
/// their normalized forms. Joint pairs farther apart than max_distance are
/// in no partition.
PartitionedAdjacency build_partitions(const SkeletonGraph& graph, int max_distance);

/// Symmetric normalization D^-1/2 A D^-1/2 with eps_deg added to every
/// degree so empty rows stay zero instead of dividing by zero.
Array<double> normalize_partition(const Array<double>& partition, double eps_deg = 1e-6);

/// Neighbor-averaging normalization for right multiplication: entry (j, i)
/// becomes A[j][i] / degree(i), with exact zeros for isolated joints. Feature
/// maps multiplied on the right by this matrix average each joint's
/// distance-d neighborhood.
Array<double> normalize_partition_row(const Array<double>& partition);

/// The 25-joint skeleton used by the Kinect-v2 datasets, centered on the
/// middle spine joint.
SkeletonGraph ntu25_graph();

SkeletonGraph load_graph_json(const std::string& path);
void save_graph_json(const SkeletonGraph& graph, const std::string& path);

}  // namespace effgcn
