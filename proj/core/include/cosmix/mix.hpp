#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "cosmix/core.hpp"
#include "cosmix/rng.hpp"
#include "cosmix/selection.hpp"

namespace cosmix {

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
};

using AxisBounds = std::array<Bounds, 3>;

/// Per-patch transform: z-rotation and per-axis scaling about the patch
/// centroid, followed by random downsampling.
struct LocalAugConfig {
    Bounds rot_z{-std::numbers::pi / 2.0, std::numbers::pi / 2.0};
    AxisBounds scale{{{0.95, 1.05}, {0.95, 1.05}, {0.95, 1.05}}};
    double keep_fraction = 0.5;
    bool enabled = true;

    void check() const;
};

/// Whole-cloud transform: rotation (x, then y, then z), per-axis scaling and a
/// translation, applied about the sensor origin.
struct GlobalAugConfig {
    AxisBounds rotation{{{0.0, 0.0}, {0.0, 0.0}, {-std::numbers::pi, std::numbers::pi}}};
    AxisBounds translation{{{-0.2, 0.2}, {-0.2, 0.2}, {-0.2, 0.2}}};
    AxisBounds scale{{{0.95, 1.05}, {0.95, 1.05}, {0.95, 1.05}}};
    bool enabled = true;

    void check() const;
};

struct MixConfig {
    LocalAugConfig local;
    GlobalAugConfig global;
};

enum class Provenance : std::uint8_t { Base = 0, Patch = 1 };

struct MixedSample {
    PointCloud cloud;
    LabelArray labels;
    std::vector<Provenance> provenance;

    std::size_t size() const noexcept { return cloud.size(); }

    /// Throws LengthMismatch when the three arrays disagree in length.
    void check() const;

    friend bool operator==(const MixedSample&, const MixedSample&) = default;
};

Patch local_augment(const Patch& patch, const LocalAugConfig& cfg, Rng& rng);

PointCloud global_augment(const PointCloud& cloud, const GlobalAugConfig& cfg, Rng& rng);

/// Number of points a patch of `n` points keeps after local augmentation.
std::size_t kept_points(std::size_t n, const LocalAugConfig& cfg);

/// Base points first, then each locally augmented patch in ascending class
/// order, then one global augmentation over the union. Labels travel with
/// their points unchanged.
MixedSample compose_mix(const PointCloud& base_cloud, const LabelArray& base_labels,
                        const std::vector<Patch>& patches, const MixConfig& cfg, Rng& rng);

struct CosmixPair {
    MixedSample source_to_target;  // target base + source patches
    MixedSample target_to_source;  // source base + target patches
    std::vector<ClassId> source_classes;
    std::vector<ClassId> target_classes;
};

/// Builds both mixed samples for one (source, target) scan pair. The target
/// base keeps every point, labeled with the filtered pseudo-labels.
CosmixPair cosmix_pair(const PointCloud& source_cloud, const LabelArray& source_labels,
                       const PointCloud& target_cloud, const Prediction& teacher_prediction,
                       const SelectionConfig& selection, const MixConfig& mix, const ClassHistogram& histogram,
                       Rng& rng);

}  // namespace cosmix
