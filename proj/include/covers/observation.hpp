#pragma once

#include "covers/group.hpp"
#include "covers/tensor.hpp"

#include <array>
#include <span>
#include <vector>

namespace covers {

inline constexpr int kArenaSize = 16;
// Image planes: agent, object, goal marker, static geometry.
inline constexpr int kImagePlanes = 4;
// Network image input: current planes followed by the initial-frame planes.
inline constexpr int kInputChannels = 2 * kImagePlanes;
inline constexpr int kStateDim = 4;  // x, y, z, gripper
inline constexpr int kAuxDim = 3;    // goal x, y, z
inline constexpr int kVectorDim = kStateDim + kAuxDim;
inline constexpr int kActionDim = 4;  // dx, dy, dz, gripper

/// What the agent sees. There is deliberately no task/group field.
struct Observation {
    Image image{kImagePlanes, kArenaSize, kArenaSize};
    Image initial{kImagePlanes, kArenaSize, kArenaSize};
    std::array<double, kStateDim> state{};
    std::array<double, kAuxDim> aux{};

    bool operator==(const Observation&) const = default;
};

// Per-channel types: x and y carry the sign irreps, z and gripper are trivial.
Representation state_rep(const GroupSpec& g);
Representation aux_rep(const GroupSpec& g);
Representation vector_input_rep(const GroupSpec& g);
Representation action_rep(const GroupSpec& g);

// Joint action on every modality: images by pixel permutation, vectors by
// their representations.
Observation transform_observation(const SpatialAction& act, GroupElement g, const Observation& obs);
std::array<double, kActionDim> transform_action(const GroupSpec& group, GroupElement g,
                                                std::span<const double> action);

struct ObsBatch {
    Array images;   // [N, kInputChannels, H, W]
    Array vectors;  // [N, kVectorDim]
    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
};

ObsBatch make_batch(std::span<const Observation> obs);
ObsBatch make_batch(std::span<const Observation* const> obs);

}  // namespace covers
