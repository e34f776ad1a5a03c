#include "effgcn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "effgcn/serialize.hpp"

namespace effgcn {

namespace {

constexpr double kDegenerateBone = 1e-8;

inline std::int64_t idx(const RawSequence& s, int c, int t, int v, int m) {
    const auto& d = s.coords.shape;
    return ((static_cast<std::int64_t>(c) * d[1] + t) * d[2] + v) * d[3] + m;
}

}  // namespace

void RawSequence::validate() const {
    require(coords.shape.size() == 4, "sequence coords must be [3, T, V, M]");
    require(coords.shape[0] == 3, "sequence must carry exactly 3 spatial channels");
    require(coords.shape[3] >= 1, "sequence needs at least one body");
    require(valid_frames >= 0 && valid_frames <= frames(),
            "valid_frames must lie within the frame count");
    for (int t = valid_frames; t < frames(); ++t)
        for (int c = 0; c < 3; ++c)
            for (int v = 0; v < joints(); ++v)
                for (int m = 0; m < bodies(); ++m)
                    require(coords.data[static_cast<std::size_t>(idx(*this, c, t, v, m))] == 0.0,
                            "frames beyond valid_frames must be zero padding");
}

bool RawSequence::body_active(int m) const {
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < frames(); ++t)
            for (int v = 0; v < joints(); ++v)
                if (coords.data[static_cast<std::size_t>(idx(*this, c, t, v, m))] != 0.0)
                    return true;
    return false;
}

Array<double> relative_positions(const RawSequence& seq, int center) {
    require(center >= 0 && center < seq.joints(), "center joint out of range");
    const int t_len = seq.frames(), v_len = seq.joints(), m_len = seq.bodies();
    Array<double> out = seq.coords;
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < t_len; ++t)
            for (int m = 0; m < m_len; ++m) {
                const double origin =
                    seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, center, m))];
                for (int v = 0; v < v_len; ++v)
                    out.data[static_cast<std::size_t>(idx(seq, c, t, v, m))] -= origin;
            }
    return out;
}

Array<double> motion_velocities(const RawSequence& seq) {
    const int t_len = seq.frames(), v_len = seq.joints(), m_len = seq.bodies();
    require(t_len >= 3, "motion velocities need at least three frames");
    Array<double> out = Array<double>::zeros({6, t_len, v_len, m_len});
    const std::int64_t chan = static_cast<std::int64_t>(t_len) * v_len * m_len;
    auto at = [&](int c, int t, int v, int m) {
        return seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, v, m))];
    };
    for (int c = 0; c < 3; ++c) {
        for (int t = 0; t < t_len; ++t) {
            for (int v = 0; v < v_len; ++v) {
                for (int m = 0; m < m_len; ++m) {
                    const std::int64_t o =
                        (static_cast<std::int64_t>(t) * v_len + v) * m_len + m;
                    if (t + 2 < t_len)
                        out.data[static_cast<std::size_t>(c * chan + o)] =
                            at(c, t + 2, v, m) - at(c, t, v, m);
                    if (t + 1 < t_len)
                        out.data[static_cast<std::size_t>((c + 3) * chan + o)] =
                            at(c, t + 1, v, m) - at(c, t, v, m);
                }
            }
        }
    }
    return out;
}

Array<double> bone_features(const RawSequence& seq, const SkeletonGraph& graph) {
    require(graph.num_joints == seq.joints(),
            "graph joint count disagrees with the sequence");
    const int t_len = seq.frames(), v_len = seq.joints(), m_len = seq.bodies();
    Array<double> out = Array<double>::zeros({6, t_len, v_len, m_len});
    const std::int64_t chan = static_cast<std::int64_t>(t_len) * v_len * m_len;
    for (int t = 0; t < t_len; ++t) {
        for (int v = 0; v < v_len; ++v) {
            const int parent = graph.parents[static_cast<std::size_t>(v)];
            for (int m = 0; m < m_len; ++m) {
                double bone[3];
                for (int c = 0; c < 3; ++c)
                    bone[c] = seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, v, m))] -
                              seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, parent, m))];
                const double norm =
                    std::sqrt(bone[0] * bone[0] + bone[1] * bone[1] + bone[2] * bone[2]);
                const std::int64_t o = (static_cast<std::int64_t>(t) * v_len + v) * m_len + m;
                for (int c = 0; c < 3; ++c) {
                    out.data[static_cast<std::size_t>(c * chan + o)] = bone[c];
                    const double cosine = norm < kDegenerateBone ? 0.0 : bone[c] / norm;
                    out.data[static_cast<std::size_t>((c + 3) * chan + o)] =
                        std::acos(std::clamp(cosine, -1.0, 1.0));
                }
            }
        }
    }
    return out;
}

std::vector<BranchInput> assemble_branches(const RawSequence& seq, const SkeletonGraph& graph) {
    seq.validate();
    const auto rel = relative_positions(seq, graph.center);
    const auto vel = motion_velocities(seq);
    const auto bone = bone_features(seq, graph);
    const int t_len = seq.frames(), v_len = seq.joints(), m_len = seq.bodies();
    const std::int64_t tv = static_cast<std::int64_t>(t_len) * v_len;

    std::vector<BranchInput> out;
    out.reserve(static_cast<std::size_t>(m_len));
    for (int m = 0; m < m_len; ++m) {
        BranchInput b{Array<double>::zeros({6, t_len, v_len}),
                      Array<double>::zeros({6, t_len, v_len}),
                      Array<double>::zeros({6, t_len, v_len})};
        for (int t = 0; t < t_len; ++t) {
            for (int v = 0; v < v_len; ++v) {
                const std::int64_t dst = static_cast<std::int64_t>(t) * v_len + v;
                const std::int64_t src = (static_cast<std::int64_t>(t) * v_len + v) * m_len + m;
                for (int c = 0; c < 3; ++c) {
                    b.joint.data[static_cast<std::size_t>(c * tv + dst)] =
                        seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, v, m))];
                    b.joint.data[static_cast<std::size_t>((c + 3) * tv + dst)] =
                        rel.data[static_cast<std::size_t>(idx(seq, c, t, v, m))];
                }
                for (int c = 0; c < 6; c++) {
                    const std::int64_t plane = static_cast<std::int64_t>(c) * t_len * v_len * m_len;
                    b.velocity.data[static_cast<std::size_t>(c * tv + dst)] =
                        vel.data[static_cast<std::size_t>(plane + src)];
                    b.bone.data[static_cast<std::size_t>(c * tv + dst)] =
                        bone.data[static_cast<std::size_t>(plane + src)];
                }
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

RawSequence load_sequence(const std::string& path) {
    RawSequence seq;
    seq.coords = load_sktn_as<double>(path);
    if (seq.coords.shape.size() != 4)
        throw FormatError("sequence tensor in " + path + " must have 4 dims [3, T, V, M], got " +
                              std::to_string(seq.coords.shape.size()),
                          9);
    if (seq.coords.shape[0] != 3)
        throw FormatError("sequence tensor in " + path + " must have 3 coordinate channels, got " +
                              std::to_string(seq.coords.shape[0]),
                          10);

    const std::string meta_path = path + ".meta.json";
    bool meta_found = false;
    if (std::ifstream probe(meta_path); probe.good()) {
        const auto meta = load_meta_json(meta_path);
        seq.label = meta.label;
        seq.valid_frames = meta.valid_frames;
        meta_found = meta.valid_frames > 0;
    }
    if (!meta_found) {
        int last = 0;
        for (int t = 0; t < seq.frames(); ++t)
            for (int c = 0; c < 3 && last <= t; ++c)
                for (int v = 0; v < seq.joints() && last <= t; ++v)
                    for (int m = 0; m < seq.bodies() && last <= t; ++m)
                        if (seq.coords.data[static_cast<std::size_t>(idx(seq, c, t, v, m))] != 0.0)
                            last = t + 1;
        seq.valid_frames = last;
    }
    return seq;
}

void save_sequence(const RawSequence& seq, const std::string& path) {
    save_sktn(path, seq.coords);
    SequenceMeta meta;
    meta.label = seq.label;
    meta.valid_frames = seq.valid_frames;
    save_meta_json(meta, path + ".meta.json");
}

RawSequence pad_to_frames(const RawSequence& seq, int target_frames) {
    const int t_len = seq.frames();
    if (t_len > target_frames)
        throw DataError("sequence has " + std::to_string(t_len) +
                        " frames, longer than the configured " + std::to_string(target_frames));
    if (t_len == target_frames) return seq;
    RawSequence out;
    out.label = seq.label;
    out.valid_frames = seq.valid_frames;
    const int v_len = seq.joints(), m_len = seq.bodies();
    out.coords = Array<double>::zeros({3, target_frames, v_len, m_len});
    const std::int64_t plane = static_cast<std::int64_t>(v_len) * m_len;
    for (int c = 0; c < 3; ++c)
        std::memcpy(out.coords.ptr() + static_cast<std::int64_t>(c) * target_frames * plane,
                    seq.coords.ptr() + static_cast<std::int64_t>(c) * t_len * plane,
                    sizeof(double) * static_cast<std::size_t>(t_len * plane));
    return out;
}

}  // namespace effgcn
