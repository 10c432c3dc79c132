#include "cosmix/core.hpp"

#include <algorithm>
#include <cmath>

namespace cosmix {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonFiniteCoordinate: return "NonFiniteCoordinate";
        case ErrorCode::UnknownClassId: return "UnknownClassId";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::DuplicateSource: return "DuplicateSource";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::IncompleteMap: return "IncompleteMap";
        case ErrorCode::UnmappedClass: return "UnmappedClass";
        case ErrorCode::MissingPaletteEntry: return "MissingPaletteEntry";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::EmptySelectionPool: return "EmptySelectionPool";
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::AllIgnored: return "AllIgnored";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::NonPositiveVoxel: return "NonPositiveVoxel";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NumericFailure: return "NumericFailure";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

ClassSet::ClassSet(std::vector<ClassEntry> classes, ClassId unlabeled_id)
    : classes_(std::move(classes)), unlabeled_id_(unlabeled_id) {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        const ClassId id = classes_[i].id;
        if (id == kIgnore) {
            throw Error(ErrorCode::InvalidConfig, "class id collides with the ignore id");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (classes_[j].id == id) {
                throw Error(ErrorCode::InvalidConfig, "duplicate class id " + std::to_string(id));
            }
        }
        if (id == unlabeled_id_) {
            throw Error(ErrorCode::InvalidConfig, "class id equals the unlabeled id " + std::to_string(id));
        }
    }
}

std::optional<std::size_t> ClassSet::index_of(ClassId id) const noexcept {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i].id == id) return i;
    }
    return std::nullopt;
}

std::vector<ClassId> ClassSet::ids() const {
    std::vector<ClassId> out;
    out.reserve(classes_.size());
    for (const auto& c : classes_) out.push_back(c.id);
    return out;
}

void validate_cloud(const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw Error(ErrorCode::NonFiniteCoordinate, "point " + std::to_string(i));
        }
    }
}

void validate(const PointCloud& cloud, const LabelArray& labels, const ClassSet& classes) {
    if (cloud.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(cloud.size()) + " points vs " +
                                                   std::to_string(labels.size()) + " labels");
    }
    validate_cloud(cloud);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kIgnore && !classes.contains(labels[i])) {
            throw Error(ErrorCode::UnknownClassId,
                        "label " + std::to_string(labels[i]) + " at point " + std::to_string(i));
        }
    }
}

std::vector<ClassId> present_classes(const LabelArray& labels) {
    std::vector<bool> seen(std::size_t{kIgnore} + 1, false);
    std::vector<ClassId> out;
    for (ClassId l : labels) {
        if (l != kIgnore && !seen[l]) {
            seen[l] = true;
            out.push_back(l);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace cosmix
