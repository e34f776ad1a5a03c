#include "effgcn/graph.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace effgcn {

namespace {

std::vector<std::vector<int>> adjacency_lists(const SkeletonGraph& g) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.num_joints));
    for (const auto& [a, b] : g.edges) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    return adj;
}

}  // namespace

void SkeletonGraph::validate() const {
    require(num_joints > 0, "graph needs at least one joint");
    for (const auto& [a, b] : edges) {
        require(a >= 0 && a < num_joints && b >= 0 && b < num_joints,
                "edge endpoint out of range");
        require(a != b, "self-loop edges are not allowed");
    }
    require(center >= 0 && center < num_joints, "center joint out of range");
    require(static_cast<int>(parents.size()) == num_joints,
            "parents must list one entry per joint");
    if (parents[static_cast<std::size_t>(center)] != center)
        throw StructureError("the center joint must be its own parent");
    for (int i = 0; i < num_joints; ++i) {
        const int p = parents[static_cast<std::size_t>(i)];
        require(p >= 0 && p < num_joints, "parent index out of range");
        if (i == center) continue;
        bool is_edge = false;
        for (const auto& [a, b] : edges)
            is_edge = is_edge || (a == i && b == p) || (a == p && b == i);
        if (!is_edge)
            throw StructureError("joint " + std::to_string(i) + " and its parent " +
                                 std::to_string(p) + " share no edge");
        // Parent chains must reach the center without cycling.
        int cursor = i;
        for (int steps = 0; cursor != center; ++steps) {
            if (steps > num_joints)
                throw StructureError("parent chain from joint " + std::to_string(i) +
                                     " never reaches the center");
            cursor = parents[static_cast<std::size_t>(cursor)];
        }
    }
    hop_distances(*this);  // raises on a disconnected edge set
}

Array<int> hop_distances(const SkeletonGraph& graph) {
    const int v = graph.num_joints;
    require(v > 0, "graph needs at least one joint");
    const auto adj = adjacency_lists(graph);
    Array<int> dist = Array<int>::full({v, v}, -1);
    for (int src = 0; src < v; ++src) {
        int* row = dist.ptr() + static_cast<std::int64_t>(src) * v;
        row[src] = 0;
        std::deque<int> queue{src};
        while (!queue.empty()) {
            const int cur = queue.front();
            queue.pop_front();
            for (int nb : adj[static_cast<std::size_t>(cur)]) {
                if (row[nb] < 0) {
                    row[nb] = row[cur] + 1;
                    queue.push_back(nb);
                }
            }
        }
        for (int dst = 0; dst < v; ++dst)
            if (row[dst] < 0)
                throw StructureError("graph is disconnected: no path between joints " +
                                     std::to_string(src) + " and " + std::to_string(dst));
    }
    return dist;
}

PartitionedAdjacency build_partitions(const SkeletonGraph& graph, int max_distance) {
    require(max_distance >= 0, "max_distance must be non-negative");
    const auto dist = hop_distances(graph);
    const int v = graph.num_joints;
    PartitionedAdjacency out;
    out.max_distance = max_distance;
    for (int d = 0; d <= max_distance; ++d) {
        Array<double> part = Array<double>::zeros({v, v});
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(v) * v; ++i)
            if (dist.data[static_cast<std::size_t>(i)] == d) part.data[static_cast<std::size_t>(i)] = 1.0;
        out.normalized.push_back(normalize_partition(part));
        out.partitions.push_back(std::move(part));
    }
    return out;
}

Array<double> normalize_partition(const Array<double>& partition, double eps_deg) {
    require(partition.shape.size() == 2 && partition.shape[0] == partition.shape[1],
            "partition matrix must be square");
    const std::int64_t v = partition.shape[0];
    std::vector<double> inv_sqrt(static_cast<std::size_t>(v));
    for (std::int64_t i = 0; i < v; ++i) {
        double deg = 0;
        for (std::int64_t j = 0; j < v; ++j) deg += partition.data[static_cast<std::size_t>(i * v + j)];
        inv_sqrt[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg + eps_deg);
    }
    Array<double> out = partition;
    for (std::int64_t i = 0; i < v; ++i)
        for (std::int64_t j = 0; j < v; ++j)
            out.data[static_cast<std::size_t>(i * v + j)] *=
                inv_sqrt[static_cast<std::size_t>(i)] * inv_sqrt[static_cast<std::size_t>(j)];
    return out;
}

Array<double> normalize_partition_row(const Array<double>& partition) {
    require(partition.shape.size() == 2 && partition.shape[0] == partition.shape[1],
            "partition matrix must be square");
    const std::int64_t v = partition.shape[0];
    Array<double> out = partition;
    for (std::int64_t i = 0; i < v; ++i) {
        double deg = 0;
        for (std::int64_t j = 0; j < v; ++j) deg += partition.data[static_cast<std::size_t>(j * v + i)];
        if (deg == 0.0) continue;
        for (std::int64_t j = 0; j < v; ++j) out.data[static_cast<std::size_t>(j * v + i)] /= deg;
    }
    return out;
}

SkeletonGraph ntu25_graph() {
    SkeletonGraph g;
    g.num_joints = 25;
    g.edges = {{0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},   {6, 5},   {7, 6},
               {8, 20},  {9, 8},   {10, 9},  {11, 10}, {12, 0},  {13, 12}, {14, 13}, {15, 14},
               {16, 0},  {17, 16}, {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11}};
    g.center = 1;  // middle of the spine
    g.parents = {1,  1,  20, 2,  20, 4,  5,  6,  20, 8,  9,  10, 0,
                 12, 13, 14, 0,  16, 17, 18, 1,  22, 7,  24, 11};
    return g;
}

SkeletonGraph load_graph_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open graph file " + path, 0);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("graph file " + path + " is not valid JSON: " + e.what(), e.byte);
    }
    SkeletonGraph g;
    try {
        g.num_joints = j.at("num_joints").get<int>();
        for (const auto& e : j.at("edges"))
            g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        g.center = j.at("center").get<int>();
        g.parents = j.at("parents").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("graph file " + path + " is missing required fields: " + e.what(), 0);
    }
    g.validate();
    return g;
}

void save_graph_json(const SkeletonGraph& graph, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["num_joints"] = graph.num_joints;
    auto edges = nlohmann::json::array();
    for (const auto& [a, b] : graph.edges) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    j["center"] = graph.center;
    j["parents"] = graph.parents;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write graph file " + path, 0);
    out << j.dump(2) << "\n";
}

}  // namespace effgcn
