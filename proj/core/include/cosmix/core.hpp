#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cosmix {

enum class ErrorCode {
    LengthMismatch,
    NonFiniteCoordinate,
    UnknownClassId,
    TruncatedFile,
    IoFailure,
    CountMismatch,
    DuplicateSource,
    MalformedLine,
    IncompleteMap,
    UnmappedClass,
    MissingPaletteEntry,
    EmptyDataset,
    EmptySelectionPool,
    EmptySample,
    AllIgnored,
    NonFiniteGradient,
    NonPositiveVoxel,
    ShapeMismatch,
    InvalidConfig,
    NumericFailure,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

using ClassId = std::uint16_t;

// Reserved id for points excluded from losses, metrics and patches. It is the
// largest value of the 16-bit semantic label field.
inline constexpr ClassId kIgnore = 0xFFFF;

struct Point {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;

    friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
    std::vector<Point> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

using LabelArray = std::vector<ClassId>;

struct ClassEntry {
    ClassId id = 0;
    std::string name;
};

/// Ordered set of semantic classes. The order defines the column layout of
/// every probability field and parameter matrix built over the set.
class ClassSet {
public:
    ClassSet() = default;
    // Throws InvalidConfig on duplicate ids or when an id equals kIgnore.
    explicit ClassSet(std::vector<ClassEntry> classes, ClassId unlabeled_id = 0);

    std::size_t size() const noexcept { return classes_.size(); }
    const std::vector<ClassEntry>& entries() const noexcept { return classes_; }
    ClassId id_at(std::size_t index) const { return classes_.at(index).id; }

    bool contains(ClassId id) const noexcept { return index_of(id).has_value(); }
    std::optional<std::size_t> index_of(ClassId id) const noexcept;

    // Id that stands for kIgnore in label files.
    ClassId unlabeled_id() const noexcept { return unlabeled_id_; }

    std::vector<ClassId> ids() const;

private:
    std::vector<ClassEntry> classes_;
    ClassId unlabeled_id_ = 0;
};

struct Patch {
    ClassId class_id = 0;
    PointCloud points;
    std::vector<std::size_t> source_indices;
};

struct LabeledScan {
    PointCloud cloud;
    LabelArray labels;
};

using Dataset = std::vector<LabeledScan>;

/// Checks the joint invariants of a (cloud, labels) pair against a class set.
/// Throws Error with LengthMismatch, NonFiniteCoordinate or UnknownClassId.
void validate(const PointCloud& cloud, const LabelArray& labels, const ClassSet& classes);

void validate_cloud(const PointCloud& cloud);

/// Sorted, de-duplicated non-ignore ids found in `labels`.
std::vector<ClassId> present_classes(const LabelArray& labels);

}  // namespace cosmix
