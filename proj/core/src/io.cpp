#include "cosmix/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cosmix::io {
namespace {

constexpr std::size_t kScanRecord = 16;
constexpr std::size_t kLabelRecord = 4;
constexpr std::size_t kPredictionRecord = 6;

std::uint32_t load_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32(std::uint32_t v, std::vector<std::uint8_t>& out) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

float load_f32(const std::uint8_t* p) { return std::bit_cast<float>(load_u32(p)); }

void store_f32(float v, std::vector<std::uint8_t>& out) { store_u32(std::bit_cast<std::uint32_t>(v), out); }

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

ClassId parse_id(std::string_view token, std::size_t line_no) {
    if (token == "ignore" || token == "IGNORE") return kIgnore;
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size() || value > kIgnore) {
        throw Error(ErrorCode::MalformedLine,
                    "line " + std::to_string(line_no) + ": bad class id '" + std::string(token) + "'");
    }
    return static_cast<ClassId>(value);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw Error(ErrorCode::IoFailure, "read failed on " + path.string());
    }
    return bytes;
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
    }
}

PointCloud read_scan(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() % kScanRecord != 0) {
        throw Error(ErrorCode::TruncatedFile,
                    path.string() + " has " + std::to_string(bytes.size()) + " bytes");
    }
    PointCloud cloud;
    cloud.points.resize(bytes.size() / kScanRecord);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const std::uint8_t* rec = bytes.data() + i * kScanRecord;
        cloud.points[i] = {load_f32(rec), load_f32(rec + 4), load_f32(rec + 8), load_f32(rec + 12)};
    }
    validate_cloud(cloud);
    return cloud;
}

void write_scan(const PointCloud& cloud, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(cloud.size() * kScanRecord);
    for (const Point& p : cloud.points) {
        store_f32(p.x, bytes);
        store_f32(p.y, bytes);
        store_f32(p.z, bytes);
        store_f32(p.intensity, bytes);
    }
    write_bytes(bytes, path);
}

LabelArray read_labels(const std::filesystem::path& path, std::size_t point_count,
                       std::optional<ClassId> unlabeled_id) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != point_count * kLabelRecord) {
        throw Error(ErrorCode::CountMismatch, path.string() + " has " + std::to_string(bytes.size()) +
                                                  " bytes, expected " +
                                                  std::to_string(point_count * kLabelRecord));
    }
    LabelArray labels(point_count);
    for (std::size_t i = 0; i < point_count; ++i) {
        const auto semantic = static_cast<ClassId>(load_u32(bytes.data() + i * kLabelRecord) & 0xFFFFu);
        labels[i] = (unlabeled_id && semantic == *unlabeled_id) ? kIgnore : semantic;
    }
    return labels;
}

void write_labels(const LabelArray& labels, const std::filesystem::path& path,
                  std::optional<ClassId> unlabeled_id) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(labels.size() * kLabelRecord);
    for (ClassId l : labels) {
        const ClassId stored = (l == kIgnore && unlabeled_id) ? *unlabeled_id : l;
        store_u32(stored, bytes);
    }
    write_bytes(bytes, path);
}

ClassMap parse_class_map(std::string_view text, std::string name) {
    ClassMap map;
    map.name = std::move(name);
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;

        const auto sep = line.find_first_of(" \t");
        if (sep == std::string_view::npos) {
            throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": expected '<src> <dst>'");
        }
        const auto src_tok = line.substr(0, sep);
        const auto dst_tok = trim(line.substr(sep));
        if (dst_tok.find_first_of(" \t") != std::string_view::npos) {
            throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": trailing tokens");
        }
        const ClassId src = parse_id(src_tok, line_no);
        const ClassId dst = parse_id(dst_tok, line_no);
        if (src == kIgnore) {
            throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": source cannot be ignore");
        }
        if (!map.entries.emplace(src, dst).second) {
            throw Error(ErrorCode::DuplicateSource, "source id " + std::to_string(src) + " on line " +
                                                        std::to_string(line_no));
        }
    }
    return map;
}

ClassMap load_class_map(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return parse_class_map(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                           path.stem().string());
}

void check_class_map(const ClassMap& map, const ClassSet& source, const ClassSet& target) {
    for (ClassId id : source.ids()) {
        if (!map.entries.contains(id)) {
            throw Error(ErrorCode::IncompleteMap, "no entry for source class " + std::to_string(id));
        }
    }
    for (const auto& [src, dst] : map.entries) {
        if (dst != kIgnore && !target.contains(dst)) {
            throw Error(ErrorCode::UnknownClassId,
                        "target id " + std::to_string(dst) + " (from " + std::to_string(src) + ")");
        }
    }
}

LabelArray apply_class_map(const LabelArray& labels, const ClassMap& map) {
    LabelArray out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kIgnore) {
            out[i] = kIgnore;
            continue;
        }
        const auto it = map.entries.find(labels[i]);
        if (it == map.entries.end()) {
            throw Error(ErrorCode::UnmappedClass, "class " + std::to_string(labels[i]));
        }
        out[i] = it->second;
    }
    return out;
}

ClassMap compose(const ClassMap& first, const ClassMap& second) {
    ClassMap out;
    out.name = first.name + "+" + second.name;
    for (const auto& [src, mid] : first.entries) {
        if (mid == kIgnore) {
            out.entries.emplace(src, kIgnore);
            continue;
        }
        const auto it = second.entries.find(mid);
        if (it == second.entries.end()) {
            throw Error(ErrorCode::UnmappedClass, "intermediate class " + std::to_string(mid));
        }
        out.entries.emplace(src, it->second);
    }
    return out;
}

void export_ply(const PointCloud& cloud, const LabelArray& labels, const Palette& palette,
                const std::filesystem::path& path) {
    if (cloud.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "cloud and labels differ in length");
    }
    for (ClassId l : labels) {
        if (!palette.contains(l)) {
            throw Error(ErrorCode::MissingPaletteEntry, "class " + std::to_string(l));
        }
    }
    std::ostringstream os;
    os << "ply\nformat ascii 1.0\n"
       << "element vertex " << cloud.size() << '\n'
       << "property float x\nproperty float y\nproperty float z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       << "end_header\n";
    os << std::setprecision(9);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const Rgb& c = palette.at(labels[i]);
        os << p.x << ' ' << p.y << ' ' << p.z << ' ' << int{c[0]} << ' ' << int{c[1]} << ' ' << int{c[2]}
           << '\n';
    }
    const std::string text = os.str();
    write_bytes(std::vector<std::uint8_t>(text.begin(), text.end()), path);
}

Palette default_palette(const ClassSet& classes) {
    static constexpr std::array<Rgb, 10> kColors{{{128, 64, 128},
                                                  {70, 70, 70},
                                                  {153, 153, 153},
                                                  {0, 0, 142},
                                                  {107, 142, 35},
                                                  {220, 20, 60},
                                                  {250, 170, 30},
                                                  {244, 35, 232},
                                                  {0, 80, 100},
                                                  {119, 11, 32}}};
    Palette palette;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        palette[classes.id_at(i)] = kColors[i % kColors.size()];
    }
    palette[kIgnore] = {0, 0, 0};
    return palette;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() % kPredictionRecord != 0) {
        throw Error(ErrorCode::TruncatedFile, path.string() + " is not a whole number of records");
    }
    std::vector<PredictionRecord> records(bytes.size() / kPredictionRecord);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::uint8_t* rec = bytes.data() + i * kPredictionRecord;
        records[i].class_id = static_cast<ClassId>(rec[0] | (rec[1] << 8));
        records[i].confidence = load_f32(rec + 2);
    }
    return records;
}

void write_predictions(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(records.size() * kPredictionRecord);
    for (const auto& r : records) {
        bytes.push_back(static_cast<std::uint8_t>(r.class_id));
        bytes.push_back(static_cast<std::uint8_t>(r.class_id >> 8));
        store_f32(r.confidence, bytes);
    }
    write_bytes(bytes, path);
}

std::vector<std::uint8_t> read_provenance(const std::filesystem::path& path) { return read_bytes(path); }

void write_provenance(const std::vector<std::uint8_t>& flags, const std::filesystem::path& path) {
    write_bytes(flags, path);
}

std::vector<float> read_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 8) {
        throw Error(ErrorCode::TruncatedFile, path.string() + " has no length header");
    }
    const std::uint64_t n = static_cast<std::uint64_t>(load_u32(bytes.data())) |
                            (static_cast<std::uint64_t>(load_u32(bytes.data() + 4)) << 32);
    if (bytes.size() != 8 + n * 4) {
        throw Error(ErrorCode::CountMismatch, path.string() + " header says " + std::to_string(n) + " values");
    }
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = load_f32(bytes.data() + 8 + i * 4);
    return values;
}

void write_checkpoint(const std::vector<float>& values, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + values.size() * 4);
    const std::uint64_t n = values.size();
    store_u32(static_cast<std::uint32_t>(n), bytes);
    store_u32(static_cast<std::uint32_t>(n >> 32), bytes);
    for (float v : values) store_f32(v, bytes);
    write_bytes(bytes, path);
}

std::vector<std::filesystem::path> list_scans(const std::filesystem::path& dir) {
    const auto scan_dir = dir / "velodyne";
    std::error_code ec;
    if (!std::filesystem::is_directory(scan_dir, ec)) {
        return {};
    }
    std::vector<std::filesystem::path> scans;
    for (const auto& entry : std::filesystem::directory_iterator(scan_dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".bin") scans.push_back(entry.path());
    }
    if (ec) {
        throw Error(ErrorCode::IoFailure, "cannot list " + scan_dir.string());
    }
    std::sort(scans.begin(), scans.end());
    return scans;
}

Dataset read_dataset(const std::filesystem::path& dir, ClassId unlabeled_id, bool require_labels) {
    const auto scans = list_scans(dir);
    if (scans.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no scans under " + (dir / "velodyne").string());
    }
    Dataset dataset;
    dataset.reserve(scans.size());
    for (const auto& scan_path : scans) {
        LabeledScan scan;
        scan.cloud = read_scan(scan_path);
        const auto label_path = dir / "labels" / scan_path.filename().replace_extension(".label");
        if (std::filesystem::exists(label_path)) {
            scan.labels = read_labels(label_path, scan.cloud.size(), unlabeled_id);
        } else if (require_labels) {
            throw Error(ErrorCode::IoFailure, "missing label file " + label_path.string());
        } else {
            scan.labels.assign(scan.cloud.size(), kIgnore);
        }
        dataset.push_back(std::move(scan));
    }
    return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, ClassId unlabeled_id) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "velodyne", ec);
    std::filesystem::create_directories(dir / "labels", ec);
    if (ec) {
        throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::ostringstream name;
        name << std::setw(6) << std::setfill('0') << i;
        write_scan(dataset[i].cloud, dir / "velodyne" / (name.str() + ".bin"));
        write_labels(dataset[i].labels, dir / "labels" / (name.str() + ".label"), unlabeled_id);
    }
}

}  // namespace cosmix::io
