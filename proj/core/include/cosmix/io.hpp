#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cosmix/core.hpp"

namespace cosmix::io {

// Scan files: packed little-endian f32 x4 (x, y, z, intensity) per point.
PointCloud read_scan(const std::filesystem::path& path);
void write_scan(const PointCloud& cloud, const std::filesystem::path& path);

// Label files: packed little-endian u32 per point; the semantic class is the
// low 16 bits. Instance bits are dropped on read and written as zero.
//
// When `unlabeled_id` is given, records carrying it decode to kIgnore and
// kIgnore is encoded as it on write.
LabelArray read_labels(const std::filesystem::path& path, std::size_t point_count,
                       std::optional<ClassId> unlabeled_id = std::nullopt);
void write_labels(const LabelArray& labels, const std::filesystem::path& path,
                  std::optional<ClassId> unlabeled_id = std::nullopt);

struct ClassMap {
    std::string name;
    std::map<ClassId, ClassId> entries;  // source id -> target id (kIgnore allowed)

    friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

/// Parses `<src> <dst> [# comment]` lines. `dst` may be the word `ignore`.
ClassMap parse_class_map(std::string_view text, std::string name = {});
ClassMap load_class_map(const std::filesystem::path& path);

/// Throws IncompleteMap if a source id has no entry, UnknownClassId if a
/// target lies outside `target` and is not kIgnore.
void check_class_map(const ClassMap& map, const ClassSet& source, const ClassSet& target);

LabelArray apply_class_map(const LabelArray& labels, const ClassMap& map);

/// `second` after `first`: apply(apply(L, first), second) == apply(L, compose(first, second)).
ClassMap compose(const ClassMap& first, const ClassMap& second);

using Rgb = std::array<std::uint8_t, 3>;
using Palette = std::map<ClassId, Rgb>;

/// ASCII PLY with x,y,z float and red,green,blue uchar per vertex.
void export_ply(const PointCloud& cloud, const LabelArray& labels, const Palette& palette,
                const std::filesystem::path& path);

Palette default_palette(const ClassSet& classes);

// Prediction files: per point, little-endian u16 class id + f32 confidence.
struct PredictionRecord {
    ClassId class_id = 0;
    float confidence = 0.0f;
};
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path);

// Provenance files: one byte per point, 0 = base, 1 = patch.
std::vector<std::uint8_t> read_provenance(const std::filesystem::path& path);
void write_provenance(const std::vector<std::uint8_t>& flags, const std::filesystem::path& path);

// Parameter checkpoints: u64 little-endian length, then f32 little-endian values.
std::vector<float> read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::vector<float>& values, const std::filesystem::path& path);

// Dataset directories: <dir>/velodyne/<name>.bin scans and, when labeled,
// <dir>/labels/<name>.label files. Scans are ordered by file name.
std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir);

/// Scans without a label file get all-ignore labels when `require_labels` is false.
Dataset read_dataset(const std::filesystem::path& dir, ClassId unlabeled_id, bool require_labels = true);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, ClassId unlabeled_id);

// Raw byte helpers shared by the formats above.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path);

}  // namespace cosmix::io
