#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "cosmix/adaptation.hpp"
#include "cosmix/core.hpp"
#include "cosmix/mix.hpp"
#include "cosmix/rng.hpp"

namespace cosmix::toybench {

// Class ids of the synthetic benchmark; 0 is the unlabeled id in label files.
enum class ToyClass : ClassId { Ground = 1, Building = 2, Pole = 3, Vehicle = 4, Vegetation = 5 };

inline constexpr std::size_t kNumClasses = 5;

ClassSet classes();

constexpr std::size_t class_index(ToyClass c) { return static_cast<std::size_t>(c) - 1; }

struct IntensityModel {
    double mean = 0.5;
    double stddev = 0.05;
};

struct SceneSpec {
    double scene_radius = 40.0;
    double density = 1.0;      // expected points per m^2 of the ground disc
    double noise_sigma = 0.02; // Gaussian coordinate noise, meters
    // Share of the point budget per class, indexed by class_index.
    std::array<double, kNumClasses> abundance{0.50, 0.20, 0.06, 0.09, 0.15};
    // Inclusive object-count range per class (ground is always one disc).
    std::array<std::array<std::size_t, 2>, kNumClasses> objects{{{1, 1}, {2, 4}, {3, 8}, {3, 6}, {2, 5}}};
    std::array<IntensityModel, kNumClasses> intensity{{{0.30, 0.06}, {0.55, 0.08}, {0.70, 0.06},
                                                        {0.85, 0.06}, {0.20, 0.06}}};
    std::uint64_t seed = 0;

    void check() const;
    std::size_t point_budget() const;
};

/// Dense, clean scans with ground-heavy abundance.
SceneSpec default_source_spec(std::uint64_t seed = 1);
/// Half the density, more noise, shifted abundance and a different intensity
/// response per class.
SceneSpec default_target_spec(std::uint64_t seed = 2);

enum class Shape { Disc, Box, Cylinder, Ellipsoid };

/// Analytic description of one generated object. Boxes and cylinders stand on
/// z = 0; `extent` holds half sizes (box), (radius, -, height) (cylinder) or
/// semi-axes (ellipsoid, disc radius in extent[0]).
struct Primitive {
    ToyClass cls = ToyClass::Ground;
    Shape shape = Shape::Disc;
    std::array<double, 3> center{};
    std::array<double, 3> extent{};
    double yaw = 0.0;
    std::size_t first_point = 0;
    std::size_t point_count = 0;
};

struct Scene {
    LabeledScan scan;
    std::vector<Primitive> primitives;
};

/// Ground disc plus surface-sampled primitives: boxes for buildings and
/// vehicles, cylinders for poles, ellipsoids for vegetation. Each class gets
/// round(budget * abundance share) points, split over its objects by area.
Scene generate_scene_with_layout(const SceneSpec& spec, Rng& rng);
LabeledScan generate_scene(const SceneSpec& spec, Rng& rng);
LabeledScan generate_scene(const SceneSpec& spec);

struct DomainPair {
    Dataset source;
    Dataset target;
};

/// Scan i of a domain is generated from Rng::stream(spec.seed, i).
Dataset make_dataset(const SceneSpec& spec, std::size_t n_scans);
DomainPair make_domain_pair(const SceneSpec& source_spec, const SceneSpec& target_spec, std::size_t n_scans);

/// Sizes of the standard benchmark run.
inline constexpr std::size_t kBenchScans = 200;
inline constexpr std::size_t kBenchEvalScans = 50;

/// Adaptation settings for the toy segmenter on this benchmark: the method's
/// alpha, beta and gamma, zeta calibrated to keep 80% of pseudo-labels, and a
/// learning rate sized for a 25-parameter logistic model.
AdaptationConfig adaptation_config(std::uint64_t seed = 0);

/// Segmenter config matching the benchmark geometry.
ToyConfig segmenter_config();

}  // namespace cosmix::toybench
