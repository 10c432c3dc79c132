#include "cosmix/mix.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cosmix {
namespace {

void check_bounds(const Bounds& b, const char* what) {
    if (!(std::isfinite(b.lo) && std::isfinite(b.hi) && b.lo <= b.hi)) {
        throw Error(ErrorCode::InvalidConfig, std::string(what) + " bounds must be finite and ordered");
    }
}

double draw(const Bounds& b, Rng& rng) { return b.lo == b.hi ? b.lo : rng.uniform(b.lo, b.hi); }

Eigen::Vector3d centroid(const PointCloud& cloud) {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const Point& p : cloud.points) sum += Eigen::Vector3d(p.x, p.y, p.z);
    return sum / static_cast<double>(cloud.size());
}

}  // namespace

void LocalAugConfig::check() const {
    check_bounds(rot_z, "local rotation");
    for (const auto& b : scale) check_bounds(b, "local scale");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "keep_fraction must lie in (0, 1]");
    }
}

void GlobalAugConfig::check() const {
    for (const auto& b : rotation) check_bounds(b, "global rotation");
    for (const auto& b : translation) check_bounds(b, "global translation");
    for (const auto& b : scale) check_bounds(b, "global scale");
}

void MixedSample::check() const {
    if (cloud.size() != labels.size() || cloud.size() != provenance.size()) {
        throw Error(ErrorCode::LengthMismatch, "mixed sample arrays differ in length");
    }
}

std::size_t kept_points(std::size_t n, const LocalAugConfig& cfg) {
    if (!cfg.enabled) return n;
    const auto k = static_cast<std::size_t>(std::ceil(cfg.keep_fraction * static_cast<double>(n) - 1e-9));
    return std::min(k, n);
}

Patch local_augment(const Patch& patch, const LocalAugConfig& cfg, Rng& rng) {
    if (!cfg.enabled || patch.points.empty()) return patch;

    const Eigen::Vector3d c = centroid(patch.points);
    const double theta = draw(cfg.rot_z, rng);
    const Eigen::Vector3d s(draw(cfg.scale[0], rng), draw(cfg.scale[1], rng), draw(cfg.scale[2], rng));
    const Eigen::Matrix3d transform =
        s.asDiagonal() * Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();

    const std::size_t n = patch.points.size();
    const std::size_t keep = kept_points(n, cfg);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (keep < n) {
        // Partial Fisher-Yates: the first `keep` entries form a uniform subset.
        for (std::size_t i = 0; i < keep; ++i) {
            const std::size_t j = i + rng.below(n - i);
            std::swap(order[i], order[j]);
        }
        order.resize(keep);
        std::sort(order.begin(), order.end());
    }

    Patch out;
    out.class_id = patch.class_id;
    out.points.points.reserve(keep);
    out.source_indices.reserve(keep);
    for (std::size_t idx : order) {
        const Point& p = patch.points.points[idx];
        const Eigen::Vector3d q = transform * (Eigen::Vector3d(p.x, p.y, p.z) - c) + c;
        out.points.points.push_back(
            {static_cast<float>(q.x()), static_cast<float>(q.y()), static_cast<float>(q.z()), p.intensity});
        if (idx < patch.source_indices.size()) out.source_indices.push_back(patch.source_indices[idx]);
    }
    return out;
}

PointCloud global_augment(const PointCloud& cloud, const GlobalAugConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return cloud;

    const double rx = draw(cfg.rotation[0], rng);
    const double ry = draw(cfg.rotation[1], rng);
    const double rz = draw(cfg.rotation[2], rng);
    const Eigen::Vector3d s(draw(cfg.scale[0], rng), draw(cfg.scale[1], rng), draw(cfg.scale[2], rng));
    const Eigen::Vector3d t(draw(cfg.translation[0], rng), draw(cfg.translation[1], rng),
                            draw(cfg.translation[2], rng));
    const Eigen::Matrix3d rotation = (Eigen::AngleAxisd(rz, Eigen::Vector3d::UnitZ()) *
                                      Eigen::AngleAxisd(ry, Eigen::Vector3d::UnitY()) *
                                      Eigen::AngleAxisd(rx, Eigen::Vector3d::UnitX()))
                                         .toRotationMatrix();
    const Eigen::Matrix3d linear = s.asDiagonal() * rotation;

    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Point& p : cloud.points) {
        const Eigen::Vector3d q = linear * Eigen::Vector3d(p.x, p.y, p.z) + t;
        out.points.push_back(
            {static_cast<float>(q.x()), static_cast<float>(q.y()), static_cast<float>(q.z()), p.intensity});
    }
    return out;
}

MixedSample compose_mix(const PointCloud& base_cloud, const LabelArray& base_labels,
                        const std::vector<Patch>& patches, const MixConfig& cfg, Rng& rng) {
    if (base_cloud.size() != base_labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "base cloud and labels differ in length");
    }
    std::vector<const Patch*> ordered;
    ordered.reserve(patches.size());
    for (const auto& p : patches) ordered.push_back(&p);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Patch* a, const Patch* b) { return a->class_id < b->class_id; });

    // One child stream per patch, drawn up front in a fixed order, so each
    // patch's transform is independent of the others' point counts.
    std::vector<Rng> patch_streams;
    patch_streams.reserve(ordered.size());
    for (std::size_t i = 0; i < ordered.size(); ++i) patch_streams.push_back(rng.split());
    Rng global_stream = rng.split();

    MixedSample mixed;
    mixed.cloud = base_cloud;
    mixed.labels = base_labels;
    mixed.provenance.assign(base_cloud.size(), Provenance::Base);
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const Patch augmented = local_augment(*ordered[i], cfg.local, patch_streams[i]);
        mixed.cloud.points.insert(mixed.cloud.points.end(), augmented.points.points.begin(),
                                  augmented.points.points.end());
        mixed.labels.insert(mixed.labels.end(), augmented.points.size(), augmented.class_id);
        mixed.provenance.insert(mixed.provenance.end(), augmented.points.size(), Provenance::Patch);
    }
    mixed.cloud = global_augment(mixed.cloud, cfg.global, global_stream);
    return mixed;
}

CosmixPair cosmix_pair(const PointCloud& source_cloud, const LabelArray& source_labels,
                       const PointCloud& target_cloud, const Prediction& teacher_prediction,
                       const SelectionConfig& selection, const MixConfig& mix, const ClassHistogram& histogram,
                       Rng& rng) {
    if (source_cloud.size() != source_labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "source cloud and labels differ in length");
    }
    if (target_cloud.size() != teacher_prediction.size()) {
        throw Error(ErrorCode::LengthMismatch, "teacher prediction does not cover the target cloud");
    }
    Rng source_select = rng.split();
    Rng target_select = rng.split();
    Rng s2t_stream = rng.split();
    Rng t2s_stream = rng.split();

    CosmixPair out;
    const LabelArray pseudo = filter_pseudo_labels(teacher_prediction, selection.zeta);

    const auto source_present = present_classes(source_labels);
    if (!source_present.empty()) {
        out.source_classes =
            select_source_classes(source_present, histogram, selection.alpha, selection.weighted, source_select);
    }
    const auto target_present = present_classes(pseudo);
    if (!target_present.empty()) {
        out.target_classes = selection.subsample_target_classes
                                 ? select_source_classes(target_present, histogram, selection.alpha,
                                                         selection.weighted, target_select)
                                 : target_present;
    }

    const auto source_patches = extract_patches(source_cloud, source_labels, out.source_classes);
    const auto target_patches = extract_patches(target_cloud, pseudo, out.target_classes);

    out.source_to_target = compose_mix(target_cloud, pseudo, source_patches, mix, s2t_stream);
    out.target_to_source = compose_mix(source_cloud, source_labels, target_patches, mix, t2s_stream);
    return out;
}

}  // namespace cosmix
