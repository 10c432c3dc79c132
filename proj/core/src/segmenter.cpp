#include "cosmix/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cosmix/rng.hpp"

namespace cosmix {
namespace {

struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept {
        std::uint64_t h = mix_seed(static_cast<std::uint64_t>(k.x));
        h = mix_seed(h ^ static_cast<std::uint64_t>(k.y));
        return static_cast<std::size_t>(mix_seed(h ^ static_cast<std::uint64_t>(k.z)));
    }
};

void check_shape(const ParamVector& params, std::size_t num_classes) {
    if (params.size() != num_classes * kToyFeatureDim) {
        throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(num_classes * kToyFeatureDim) +
                                                  " parameters, got " + std::to_string(params.size()));
    }
}

ProbabilityField softmax_rows(const std::vector<double>& features, std::size_t n, const ParamVector& params,
                              std::size_t num_classes) {
    ProbabilityField probs(n, num_classes);
    std::vector<double> logits(num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        const double* phi = features.data() + i * kToyFeatureDim;
        double max_logit = -INFINITY;
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double* w = params.values.data() + c * kToyFeatureDim;
            double z = 0.0;
            for (std::size_t f = 0; f < kToyFeatureDim; ++f) z += w[f] * phi[f];
            logits[c] = z;
            max_logit = std::max(max_logit, z);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            logits[c] = std::exp(logits[c] - max_logit);
            sum += logits[c];
        }
        for (std::size_t c = 0; c < num_classes; ++c) probs.at(i, c) = logits[c] / sum;
    }
    return probs;
}

}  // namespace

Prediction to_prediction(const ProbabilityField& probs, const ClassSet& classes) {
    if (probs.num_classes != classes.size()) {
        throw Error(ErrorCode::ShapeMismatch, "probability columns do not match the class set");
    }
    Prediction pred;
    const std::size_t n = probs.size();
    pred.classes.resize(n);
    pred.confidence.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probs.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        pred.classes[i] = classes.id_at(best);
        pred.confidence[i] = static_cast<float>(row[best]);
    }
    return pred;
}

VoxelGrid voxelize(const PointCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) {
        throw Error(ErrorCode::NonPositiveVoxel, "voxel size " + std::to_string(voxel_size));
    }
    VoxelGrid grid;
    grid.point_voxel.resize(cloud.size());
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> index;
    index.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x / voxel_size)),
                           static_cast<std::int64_t>(std::floor(p.y / voxel_size)),
                           static_cast<std::int64_t>(std::floor(p.z / voxel_size))};
        const auto [it, inserted] = index.try_emplace(key, grid.voxel_counts.size());
        if (inserted) grid.voxel_counts.push_back(0);
        ++grid.voxel_counts[it->second];
        grid.point_voxel[i] = it->second;
    }
    return grid;
}

void ToyConfig::check() const {
    if (!(voxel_size > 0.0)) throw Error(ErrorCode::NonPositiveVoxel, "voxel size must be positive");
    if (!(scene_radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "scene radius must be positive");
}

std::vector<double> toy_features(const PointCloud& cloud, const ToyConfig& cfg) {
    const auto grid = voxelize(cloud, cfg.voxel_size);
    const std::size_t max_count =
        grid.voxel_counts.empty() ? 1 : *std::max_element(grid.voxel_counts.begin(), grid.voxel_counts.end());
    std::vector<double> features(cloud.size() * kToyFeatureDim);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        double* phi = features.data() + i * kToyFeatureDim;
        phi[0] = p.z / cfg.scene_radius;
        phi[1] = std::hypot(static_cast<double>(p.x), static_cast<double>(p.y)) / cfg.scene_radius;
        phi[2] = p.intensity;
        phi[3] = static_cast<double>(grid.voxel_counts[grid.point_voxel[i]]) / static_cast<double>(max_count);
        phi[4] = 1.0;
    }
    return features;
}

ProbabilityField toy_predict(const PointCloud& cloud, const ParamVector& params, std::size_t num_classes,
                             const ToyConfig& cfg) {
    check_shape(params, num_classes);
    return softmax_rows(toy_features(cloud, cfg), cloud.size(), params, num_classes);
}

GradResult toy_grad(const PointCloud& cloud, const LabelArray& labels, const ParamVector& params,
                    const ClassSet& classes, const ToyConfig& cfg) {
    const std::size_t k = classes.size();
    check_shape(params, k);
    if (cloud.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "cloud and labels differ in length");
    }
    const auto features = toy_features(cloud, cfg);
    const auto probs = softmax_rows(features, cloud.size(), params, k);
    const auto dice = dice_loss_and_grad(probs, labels, classes);

    GradResult out;
    out.loss = dice.loss;
    out.grad.values.assign(params.size(), 0.0);
    std::vector<double> dlogit(k);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (labels[i] == kIgnore) continue;
        // Softmax Jacobian: dL/dz_c = p_c (g_c - sum_j g_j p_j).
        double dot = 0.0;
        for (std::size_t c = 0; c < k; ++c) dot += dice.grad.at(i, c) * probs.at(i, c);
        for (std::size_t c = 0; c < k; ++c) dlogit[c] = probs.at(i, c) * (dice.grad.at(i, c) - dot);
        const double* phi = features.data() + i * kToyFeatureDim;
        for (std::size_t c = 0; c < k; ++c) {
            double* g = out.grad.values.data() + c * kToyFeatureDim;
            for (std::size_t f = 0; f < kToyFeatureDim; ++f) g[f] += dlogit[c] * phi[f];
        }
    }
    return out;
}

ToySegmenter::ToySegmenter(ClassSet classes, ToyConfig cfg)
    : classes_(std::move(classes)), cfg_(cfg), params_{std::vector<double>(classes_.size() * kToyFeatureDim, 0.0)} {
    cfg_.check();
}

ParamVector ToySegmenter::initial_params(std::size_t num_classes, std::uint64_t seed) {
    Rng rng(seed);
    ParamVector p;
    p.values.resize(num_classes * kToyFeatureDim);
    for (double& v : p.values) v = rng.normal(0.0, 0.01);
    return p;
}

ProbabilityField ToySegmenter::predict(const PointCloud& cloud) const {
    return toy_predict(cloud, params_, classes_.size(), cfg_);
}

void ToySegmenter::set_params(ParamVector params) {
    check_shape(params, classes_.size());
    params_ = std::move(params);
}

GradResult ToySegmenter::grad(const PointCloud& cloud, const LabelArray& labels, LossKind) const {
    return toy_grad(cloud, labels, params_, classes_, cfg_);
}

}  // namespace cosmix
