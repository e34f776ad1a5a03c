#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "effgcn/graph.hpp"
#include "oracles.hpp"

using namespace effgcn;

namespace {

SkeletonGraph path3() {
    SkeletonGraph g;
    g.num_joints = 3;
    g.edges = {{0, 1}, {1, 2}};
    g.center = 1;
    g.parents = {1, 1, 1};
    return g;
}

}  // namespace

TEST_CASE("hop distances on a three-joint path") {
    const auto d = hop_distances(path3());
    CHECK(d.data[0 * 3 + 2] == 2);
    CHECK(d.data[0 * 3 + 1] == 1);
    for (int i = 0; i < 3; ++i) CHECK(d.data[i * 3 + i] == 0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(d.data[i * 3 + j] == d.data[j * 3 + i]);
}

TEST_CASE("hop distances of a single joint") {
    SkeletonGraph g;
    g.num_joints = 1;
    g.center = 0;
    g.parents = {0};
    const auto d = hop_distances(g);
    CHECK(d.shape == Shape({1, 1}));
    CHECK(d.data[0] == 0);
}

TEST_CASE("hop distances on the 25-joint skeleton match breadth-first search") {
    const auto g = ntu25_graph();
    const auto d = hop_distances(g);
    const auto ref = oracle::bfs_distances(g.num_joints, g.edges);
    for (int i = 0; i < g.num_joints; ++i)
        for (int j = 0; j < g.num_joints; ++j)
            CHECK(d.data[i * g.num_joints + j] == ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    // hand tip (joint 21) to the center spine
    CHECK(d.data[21 * 25 + g.center] ==
          ref[21][static_cast<std::size_t>(g.center)]);
}

TEST_CASE("disconnected graphs are rejected with the unreachable pair named") {
    SkeletonGraph g;
    g.num_joints = 4;
    g.edges = {{0, 1}, {2, 3}};
    g.center = 0;
    g.parents = {0, 0, 2, 2};
    CHECK_THROWS_AS(hop_distances(g), StructureError);
    try {
        hop_distances(g);
    } catch (const StructureError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("disconnected") != std::string::npos);
    }
}

TEST_CASE("graph validation rejects broken parent maps") {
    auto g = path3();
    g.parents = {1, 0, 1};  // center no longer its own parent
    CHECK_THROWS_AS(g.validate(), StructureError);
    g = path3();
    g.parents = {2, 1, 1};  // (0, 2) is not an edge
    CHECK_THROWS_AS(g.validate(), StructureError);
}

TEST_CASE("partitions: D=0 is the identity") {
    const auto parts = build_partitions(path3(), 0);
    REQUIRE(parts.partitions.size() == 1);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(parts.partitions[0].data[i * 3 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("partitions of the three-joint path at D=1 and D=2") {
    const auto parts = build_partitions(path3(), 2);
    const auto& a1 = parts.partitions[1];
    const auto& a2 = parts.partitions[2];
    CHECK(a1.data == Array<double>({3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0}).data);
    CHECK(a2.data == Array<double>({3, 3}, {0, 0, 1, 0, 0, 0, 1, 0, 0}).data);
}

TEST_CASE("negative max distance is an argument error") {
    CHECK_THROWS_AS(build_partitions(path3(), -1), std::invalid_argument);
}

TEST_CASE("partitions agree with the BFS oracle and are disjoint") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = oracle::random_connected_graph(rng);
        const auto ref = oracle::bfs_distances(g.num_joints, g.edges);
        const int max_d = 2;
        const auto parts = build_partitions(g, max_d);
        const int v = g.num_joints;
        for (int i = 0; i < v; ++i) {
            for (int j = 0; j < v; ++j) {
                int hits = 0;
                for (int d = 0; d <= max_d; ++d) {
                    const double bit = parts.partitions[static_cast<std::size_t>(d)].data[i * v + j];
                    CHECK((bit == 0.0 || bit == 1.0));
                    if (bit == 1.0) {
                        ++hits;
                        CHECK(ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == d);
                    }
                }
                CHECK(hits <= 1);
                const int true_d = ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (true_d >= 0 && true_d <= max_d)
                    CHECK(parts.partitions[static_cast<std::size_t>(true_d)].data[i * v + j] == 1.0);
            }
        }
    }
}

TEST_CASE("NTU partitions at D=2 cover each ordered pair at most once") {
    const auto parts = build_partitions(ntu25_graph(), 2);
    for (int i = 0; i < 25 * 25; ++i) {
        double total = 0;
        for (const auto& p : parts.partitions) total += p.data[i];
        CHECK(total <= 1.0);
    }
}

TEST_CASE("symmetric normalization: identity stays the identity up to eps") {
    Array<double> eye = Array<double>::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.data[i * 4 + i] = 1.0;
    const auto n = normalize_partition(eye);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j)
                CHECK(n.data[i * 4 + j] == doctest::Approx(1.0).epsilon(1e-6));
            else
                CHECK(n.data[i * 4 + j] == 0.0);
        }
}

TEST_CASE("symmetric normalization of the path adjacency") {
    const auto parts = build_partitions(path3(), 1);
    const auto& n = parts.normalized[1];
    // degrees (1, 2, 1): entry (0,1) = 1/sqrt(1*2)
    CHECK(n.data[0 * 3 + 1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-5));
}

TEST_CASE("normalizing the zero matrix returns the zero matrix") {
    const auto n = normalize_partition(Array<double>::zeros({5, 5}));
    for (double v : n.data) CHECK(v == 0.0);
}

TEST_CASE("non-square input is rejected") {
    CHECK_THROWS_AS(normalize_partition(Array<double>::zeros({3, 4})), std::invalid_argument);
}

TEST_CASE("normalized partitions are symmetric with entries in [0, 1]") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = oracle::random_connected_graph(rng);
        const auto parts = build_partitions(g, 2);
        const int v = g.num_joints;
        for (const auto& n : parts.normalized) {
            for (int i = 0; i < v; ++i) {
                for (int j = 0; j < v; ++j) {
                    CHECK(n.data[i * v + j] == doctest::Approx(n.data[j * v + i]).epsilon(1e-12));
                    CHECK(n.data[i * v + j] >= 0.0);
                    CHECK(n.data[i * v + j] <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("receiver normalization averages each joint's neighbor subset") {
    const auto parts = build_partitions(path3(), 1);
    const auto n = normalize_partition_row(parts.partitions[1]);
    // joint 1 has two distance-1 neighbors, joints 0 and 2 have one each
    CHECK(n.data[0 * 3 + 1] == doctest::Approx(0.5));
    CHECK(n.data[2 * 3 + 1] == doctest::Approx(0.5));
    CHECK(n.data[1 * 3 + 0] == doctest::Approx(1.0));
    CHECK(n.data[1 * 3 + 2] == doctest::Approx(1.0));
    // zero rows stay exactly zero
    const auto z = normalize_partition_row(Array<double>::zeros({3, 3}));
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("graph JSON round trip and the shipped 25-joint file") {
    const auto tmp = std::filesystem::temp_directory_path() / "effgcn_graph_test.json";
    const auto g = ntu25_graph();
    save_graph_json(g, tmp.string());
    const auto loaded = load_graph_json(tmp.string());
    CHECK(loaded.num_joints == g.num_joints);
    CHECK(loaded.edges == g.edges);
    CHECK(loaded.center == g.center);
    CHECK(loaded.parents == g.parents);
    std::filesystem::remove(tmp);

    const auto shipped = load_graph_json(std::string(EFFGCN_SOURCE_DIR) + "/data/ntu25_graph.json");
    CHECK(shipped.edges == g.edges);
    CHECK(shipped.center == g.center);
    CHECK(shipped.parents == g.parents);
}

TEST_CASE("malformed graph files raise format errors") {
    namespace fs = std::filesystem;
    const auto tmp = fs::temp_directory_path() / "effgcn_badgraph.json";
    {
        std::ofstream f(tmp);
        f << "{ not json";
    }
    CHECK_THROWS_AS(load_graph_json(tmp.string()), FormatError);
    {
        std::ofstream f(tmp);
        f << "{\"num_joints\": 2}";
    }
    CHECK_THROWS_AS(load_graph_json(tmp.string()), FormatError);
    fs::remove(tmp);
}
