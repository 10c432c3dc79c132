#include "cosmix/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cosmix {

double ClassHistogram::frequency(ClassId c) const {
    if (total == 0) return 0.0;
    const auto it = counts.find(c);
    return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
}

void SelectionConfig::check() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1]");
    }
    if (!(zeta > 0.0 && zeta < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "zeta must lie in (0, 1)");
    }
}

ClassHistogram class_frequency(std::span<const LabelArray> scans) {
    if (scans.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no scans to count");
    }
    std::vector<std::uint64_t> dense(std::size_t{kIgnore} + 1, 0);
    for (const auto& labels : scans) {
        for (ClassId l : labels) ++dense[l];
    }
    ClassHistogram h;
    for (std::size_t id = 0; id < kIgnore; ++id) {
        if (dense[id] > 0) {
            h.counts.emplace(static_cast<ClassId>(id), dense[id]);
            h.total += dense[id];
        }
    }
    return h;
}

ClassHistogram class_frequency(const Dataset& dataset) {
    std::vector<LabelArray> labels;
    labels.reserve(dataset.size());
    for (const auto& scan : dataset) labels.push_back(scan.labels);
    return class_frequency(labels);
}

std::size_t selection_size(std::size_t present_count, double alpha) {
    const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(present_count) + 0.5));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(present_count, 1));
}

std::vector<ClassId> select_source_classes(std::span<const ClassId> present, const ClassHistogram& histogram,
                                           double alpha, bool weighted, Rng& rng) {
    if (present.empty()) {
        throw Error(ErrorCode::EmptySelectionPool, "no classes present");
    }
    std::vector<ClassId> pool(present.begin(), present.end());
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    std::vector<double> weights(pool.size(), 1.0);
    if (weighted) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            weights[i] = 1.0 - histogram.frequency(pool[i]);
        }
    }

    const std::size_t k = selection_size(pool.size(), alpha);
    std::vector<ClassId> chosen;
    chosen.reserve(k);
    while (chosen.size() < k) {
        double sum = 0.0;
        for (double w : weights) sum += w;
        std::size_t pick = pool.size() - 1;
        if (sum > 0.0) {
            const double u = rng.uniform() * sum;
            double acc = 0.0;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                acc += weights[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(pool.size());
        }
        chosen.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<Patch> extract_patches(const PointCloud& cloud, const LabelArray& labels,
                                   std::span<const ClassId> classes) {
    if (cloud.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "cloud and labels differ in length");
    }
    std::vector<ClassId> wanted(classes.begin(), classes.end());
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

    std::vector<Patch> patches;
    for (ClassId c : wanted) {
        if (c == kIgnore) continue;
        Patch patch;
        patch.class_id = c;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) {
                patch.points.points.push_back(cloud.points[i]);
                patch.source_indices.push_back(i);
            }
        }
        if (!patch.source_indices.empty()) patches.push_back(std::move(patch));
    }
    return patches;
}

LabelArray filter_pseudo_labels(const Prediction& prediction, double zeta) {
    if (prediction.classes.size() != prediction.confidence.size()) {
        throw Error(ErrorCode::LengthMismatch, "prediction classes and confidences differ in length");
    }
    LabelArray out(prediction.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = prediction.confidence[i] >= zeta ? prediction.classes[i] : kIgnore;
    }
    return out;
}

double calibrate_zeta(std::span<const float> sample, double target_fraction) {
    if (sample.empty()) {
        throw Error(ErrorCode::EmptySample, "no confidences to calibrate on");
    }
    std::vector<float> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    auto keep = static_cast<std::size_t>(std::floor(target_fraction * static_cast<double>(n) + 0.5));
    keep = std::clamp<std::size_t>(keep, 1, n);
    return sorted[n - keep];
}

void write_histogram(const ClassHistogram& histogram, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    for (const auto& [id, count] : histogram.counts) out << id << ' ' << count << '\n';
    if (!out) {
        throw Error(ErrorCode::IoFailure, "write failed on " + path.string());
    }
}

ClassHistogram read_histogram(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    ClassHistogram h;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        unsigned id = 0;
        std::uint64_t count = 0;
        std::string rest;
        if (!(ls >> id >> count) || (ls >> rest) || id >= kIgnore) {
            throw Error(ErrorCode::MalformedLine, path.string() + ":" + std::to_string(line_no));
        }
        if (!h.counts.emplace(static_cast<ClassId>(id), count).second) {
            throw Error(ErrorCode::MalformedLine, "duplicate class " + std::to_string(id));
        }
        h.total += count;
    }
    return h;
}

}  // namespace cosmix
