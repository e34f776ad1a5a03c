#pragma once

#include <optional>
#include <string>
#include <vector>

#include "effgcn/graph.hpp"
#include "effgcn/tensor.hpp"

namespace effgcn {

/// One captured action sequence: 3D joint coordinates over time for one or
/// more bodies, shaped [3, T, V, M]. Frames at index >= valid_frames are
/// zero padding.
struct RawSequence {
    Array<double> coords;
    std::optional<int> label;
    int valid_frames = 0;

    int frames() const { return static_cast<int>(coords.shape[1]); }
    int joints() const { return static_cast<int>(coords.shape[2]); }
    int bodies() const { return static_cast<int>(coords.shape[3]); }

    void validate() const;

    /// True when body m carries any nonzero coordinate.
    bool body_active(int m) const;
};

/// The three 6-channel input streams for one body, each [6, T, V].
/// joint   = absolute xyz ++ center-relative xyz
/// velocity = two-step xyz ++ one-step xyz
/// bone    = bone vector xyz ++ direction angles (radians, in [0, pi])
struct BranchInput {
    Array<double> joint;
    Array<double> velocity;
    Array<double> bone;
};

/// coords minus the center joint's coordinates, per frame and body ([3,T,V,M]).
Array<double> relative_positions(const RawSequence& seq, int center);

/// Fast (two-frame) and slow (one-frame) displacements stacked to [6,T,V,M].
/// The trailing frames with no lookahead are zero-filled so T is preserved.
Array<double> motion_velocities(const RawSequence& seq);

/// Bone vectors toward each joint's parent plus their direction-cosine
/// angles, stacked to [6,T,V,M]. Bones shorter than 1e-8 get all three
/// cosines defined as zero, i.e. angles of pi/2.
Array<double> bone_features(const RawSequence& seq, const SkeletonGraph& graph);

/// All three streams for every body of the sequence.
std::vector<BranchInput> assemble_branches(const RawSequence& seq, const SkeletonGraph& graph);

/// Reads a sequence tensor plus its optional .meta.json sidecar. When the
/// sidecar is absent, valid_frames is inferred as one past the last frame
/// holding any nonzero coordinate.
RawSequence load_sequence(const std::string& path);

void save_sequence(const RawSequence& seq, const std::string& path);

/// Zero-pads at the end up to target frames; longer sequences are rejected.
RawSequence pad_to_frames(const RawSequence& seq, int target_frames);

}  // namespace effgcn
