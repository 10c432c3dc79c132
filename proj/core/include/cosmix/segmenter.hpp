#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cosmix/core.hpp"
#include "cosmix/learning.hpp"
#include "cosmix/selection.hpp"

namespace cosmix {

enum class LossKind { Dice };

struct GradResult {
    double loss = 0.0;
    ParamVector grad;
};

/// Per-point classifier used as student and teacher. Implementations must make
/// predict a pure function of (cloud, params).
class Segmenter {
public:
    virtual ~Segmenter() = default;

    virtual const ClassSet& classes() const = 0;
    virtual ProbabilityField predict(const PointCloud& cloud) const = 0;
    virtual const ParamVector& params() const = 0;
    virtual void set_params(ParamVector params) = 0;
    virtual GradResult grad(const PointCloud& cloud, const LabelArray& labels, LossKind loss) const = 0;
    virtual std::unique_ptr<Segmenter> clone() const = 0;
};

/// Argmax class and its probability for every point.
Prediction to_prediction(const ProbabilityField& probs, const ClassSet& classes);

struct VoxelGrid {
    std::vector<std::size_t> point_voxel;   // voxel index of every point
    std::vector<std::size_t> voxel_counts;  // points per voxel, first-seen order
};

/// Voxel key = floor(coord / voxel_size) per axis. Throws NonPositiveVoxel.
VoxelGrid voxelize(const PointCloud& cloud, double voxel_size);

struct ToyConfig {
    double voxel_size = 1.0;
    double scene_radius = 50.0;

    void check() const;
};

// (z / R, sqrt(x^2 + y^2) / R, intensity, voxel count / max voxel count, 1)
inline constexpr std::size_t kToyFeatureDim = 5;

/// Row-major N x kToyFeatureDim feature matrix.
std::vector<double> toy_features(const PointCloud& cloud, const ToyConfig& cfg);

/// softmax(W * phi) per point; W is classes x kToyFeatureDim, row-major.
ProbabilityField toy_predict(const PointCloud& cloud, const ParamVector& params, std::size_t num_classes,
                             const ToyConfig& cfg);

/// Dice loss of toy_predict and its gradient with respect to W.
GradResult toy_grad(const PointCloud& cloud, const LabelArray& labels, const ParamVector& params,
                    const ClassSet& classes, const ToyConfig& cfg);

/// Multinomial logistic model over the toy features.
class ToySegmenter final : public Segmenter {
public:
    ToySegmenter(ClassSet classes, ToyConfig cfg = {});

    /// Weights drawn from N(0, 0.01^2).
    static ParamVector initial_params(std::size_t num_classes, std::uint64_t seed);

    const ClassSet& classes() const override { return classes_; }
    ProbabilityField predict(const PointCloud& cloud) const override;
    const ParamVector& params() const override { return params_; }
    void set_params(ParamVector params) override;
    GradResult grad(const PointCloud& cloud, const LabelArray& labels, LossKind loss) const override;
    std::unique_ptr<Segmenter> clone() const override { return std::make_unique<ToySegmenter>(*this); }

    const ToyConfig& config() const noexcept { return cfg_; }

private:
    ClassSet classes_;
    ToyConfig cfg_;
    ParamVector params_;
};

}  // namespace cosmix
