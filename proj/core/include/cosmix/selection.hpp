#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "cosmix/core.hpp"
#include "cosmix/rng.hpp"

namespace cosmix {

/// Per-class point counts accumulated over a labeled dataset.
struct ClassHistogram {
    std::map<ClassId, std::uint64_t> counts;
    std::uint64_t total = 0;

    /// counts[c] / total; 0 for classes never seen or an empty histogram.
    double frequency(ClassId c) const;

    friend bool operator==(const ClassHistogram&, const ClassHistogram&) = default;
};

struct SelectionConfig {
    double alpha = 0.5;   // fraction of present classes turned into patches
    double zeta = 0.85;   // pseudo-label confidence threshold
    bool weighted = true; // draw with weights 1 - frequency instead of uniformly
    // Also subsample the surviving pseudo-label classes with alpha on the
    // target side, after confidence filtering.
    bool subsample_target_classes = true;

    void check() const;
};

struct Prediction {
    LabelArray classes;
    std::vector<float> confidence;

    std::size_t size() const noexcept { return classes.size(); }
};

/// Throws EmptyDataset when `scans` is empty. Ignored points are not counted.
ClassHistogram class_frequency(std::span<const LabelArray> scans);
ClassHistogram class_frequency(const Dataset& dataset);

/// k = max(1, round_half_up(alpha * |present|)) distinct classes, drawn one at a
/// time without replacement. Weighted draws use 1 - frequency(c) renormalized
/// over the remaining candidates; if every remaining weight is zero the draw
/// falls back to uniform. The result is sorted ascending.
std::vector<ClassId> select_source_classes(std::span<const ClassId> present, const ClassHistogram& histogram,
                                           double alpha, bool weighted, Rng& rng);

std::size_t selection_size(std::size_t present_count, double alpha);

/// One patch per requested class that has at least one point, ascending by id.
std::vector<Patch> extract_patches(const PointCloud& cloud, const LabelArray& labels,
                                   std::span<const ClassId> classes);

/// Keeps predicted classes whose confidence is >= zeta; the rest become kIgnore.
LabelArray filter_pseudo_labels(const Prediction& prediction, double zeta);

/// Empirical (1 - target_fraction)-quantile of the sample: filtering with the
/// returned threshold keeps round(target_fraction * n) points, or more on ties.
double calibrate_zeta(std::span<const float> sample, double target_fraction);

void write_histogram(const ClassHistogram& histogram, const std::filesystem::path& path);
ClassHistogram read_histogram(const std::filesystem::path& path);

}  // namespace cosmix
