#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cosmix/selection.hpp"
#include "test_util.hpp"

namespace cosmix {
namespace {

using testing::error_code_of;

ClassHistogram histogram_of(std::map<ClassId, std::uint64_t> counts) {
    ClassHistogram h;
    h.counts = std::move(counts);
    for (const auto& [c, n] : h.counts) h.total += n;
    return h;
}

TEST(ClassFrequency, TwoScans) {
    const std::vector<LabelArray> scans{{0, 0, 1}, {1}};
    const auto h = class_frequency(scans);
    EXPECT_EQ(h.counts, (std::map<ClassId, std::uint64_t>{{0, 2}, {1, 2}}));
    EXPECT_DOUBLE_EQ(h.frequency(0), 0.5);
    EXPECT_DOUBLE_EQ(h.frequency(1), 0.5);
    EXPECT_DOUBLE_EQ(h.frequency(7), 0.0);
}

TEST(ClassFrequency, SingleClassAndIgnore) {
    const std::vector<LabelArray> scans{{3, kIgnore, 3}};
    const auto h = class_frequency(scans);
    EXPECT_EQ(h.total, 2u);
    EXPECT_DOUBLE_EQ(h.frequency(3), 1.0);
}

TEST(ClassFrequency, EmptyDataset) {
    EXPECT_EQ(error_code_of([] { class_frequency(std::span<const LabelArray>{}); }), ErrorCode::EmptyDataset);
    EXPECT_EQ(error_code_of([] { class_frequency(Dataset{}); }), ErrorCode::EmptyDataset);
}

TEST(ClassFrequency, MatchesPerPointOracle) {
    Rng rng(21);
    std::vector<LabelArray> scans;
    for (int i = 0; i < 10; ++i) scans.push_back(testing::random_labels(50 + rng.below(100), {0, 1, 2, 5, 9}, rng, 0.1));
    std::map<ClassId, std::uint64_t> oracle;
    std::uint64_t total = 0;
    for (const auto& s : scans) {
        for (ClassId l : s) {
            if (l == kIgnore) continue;
            ++oracle[l];
            ++total;
        }
    }
    const auto h = class_frequency(scans);
    EXPECT_EQ(h.counts, oracle);
    EXPECT_EQ(h.total, total);
}

TEST(SelectionSize, RoundsHalfUpWithFloorOfOne) {
    EXPECT_EQ(selection_size(4, 0.5), 2u);
    EXPECT_EQ(selection_size(3, 0.5), 2u);
    EXPECT_EQ(selection_size(1, 0.5), 1u);
    EXPECT_EQ(selection_size(5, 0.1), 1u);
    EXPECT_EQ(selection_size(5, 1.0), 5u);
}

TEST(SelectSourceClasses, HalfOfFourIsTwoDistinctMembers) {
    Rng rng(1);
    const std::vector<ClassId> present{1, 4, 6, 9};
    const auto h = histogram_of({{1, 10}, {4, 20}, {6, 30}, {9, 40}});
    for (int trial = 0; trial < 200; ++trial) {
        for (bool weighted : {true, false}) {
            const auto picked = select_source_classes(present, h, 0.5, weighted, rng);
            ASSERT_EQ(picked.size(), 2u);
            EXPECT_TRUE(std::is_sorted(picked.begin(), picked.end()));
            EXPECT_NE(picked[0], picked[1]);
            for (ClassId c : picked) EXPECT_NE(std::find(present.begin(), present.end(), c), present.end());
        }
    }
}

TEST(SelectSourceClasses, EmptyPool) {
    Rng rng(1);
    EXPECT_EQ(error_code_of([&] { select_source_classes({}, ClassHistogram{}, 0.5, true, rng); }),
              ErrorCode::EmptySelectionPool);
}

TEST(SelectSourceClasses, UniformHistogramIsSymmetric) {
    Rng rng(77);
    const std::vector<ClassId> present{0, 1, 2, 3};
    const auto h = histogram_of({{0, 5}, {1, 5}, {2, 5}, {3, 5}});
    constexpr int kTrials = 10000;
    std::map<ClassId, int> hits;
    for (int t = 0; t < kTrials; ++t) {
        for (ClassId c : select_source_classes(present, h, 0.5, true, rng)) ++hits[c];
    }
    // Each class is in the pair with probability 1/2.
    const double sigma = std::sqrt(kTrials * 0.5 * 0.5);
    for (ClassId c : present) EXPECT_NEAR(hits[c], kTrials * 0.5, 3.0 * sigma) << "class " << c;
}

TEST(SelectSourceClasses, RareClassDrawnInProportionToOneMinusFrequency) {
    Rng rng(2024);
    const std::vector<ClassId> present{0, 1};
    const auto h = histogram_of({{0, 900}, {1, 100}});
    constexpr int kTrials = 10000;
    int rare = 0;
    for (int t = 0; t < kTrials; ++t) {
        const auto picked = select_source_classes(present, h, 0.5, true, rng);
        ASSERT_EQ(picked.size(), 1u);
        rare += picked[0] == 1;
    }
    EXPECT_NEAR(static_cast<double>(rare) / kTrials, 0.9, 0.01);
}

TEST(SelectSourceClasses, ScaleFree) {
    const std::vector<ClassId> present{0, 1, 2};
    const auto h1 = histogram_of({{0, 7}, {1, 2}, {2, 1}});
    const auto h2 = histogram_of({{0, 7000}, {1, 2000}, {2, 1000}});
    Rng a(5), b(5);
    for (int t = 0; t < 500; ++t) {
        EXPECT_EQ(select_source_classes(present, h1, 0.5, true, a), select_source_classes(present, h2, 0.5, true, b));
    }
}

TEST(SelectSourceClasses, SingleClassWithFullFrequencyFallsBackToUniform) {
    Rng rng(3);
    const std::vector<ClassId> present{4};
    EXPECT_EQ(select_source_classes(present, histogram_of({{4, 10}}), 0.5, true, rng), (std::vector<ClassId>{4}));
}

TEST(ExtractPatches, Partition) {
    const PointCloud cloud{{{0, 0, 0, 0}, {1, 0, 0, 0}, {2, 0, 0, 0}}};
    const auto patches = extract_patches(cloud, {0, 1, 0}, std::vector<ClassId>{0});
    ASSERT_EQ(patches.size(), 1u);
    EXPECT_EQ(patches[0].class_id, 0);
    EXPECT_EQ(patches[0].source_indices, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(patches[0].points.points[1].x, 2.0f);
    EXPECT_TRUE(extract_patches(cloud, {0, 1, 0}, std::vector<ClassId>{2}).empty());
}

TEST(ExtractPatches, UnionOfAllPatchesRecoversLabeledIndices) {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const auto cloud = testing::random_cloud(300, rng);
        const auto labels = testing::random_labels(300, {0, 1, 2, 3}, rng, 0.1);
        const auto present = present_classes(labels);
        std::vector<int> seen(labels.size(), 0);
        for (const auto& patch : extract_patches(cloud, labels, present)) {
            ASSERT_EQ(patch.points.size(), patch.source_indices.size());
            for (std::size_t k = 0; k < patch.source_indices.size(); ++k) {
                const std::size_t i = patch.source_indices[k];
                EXPECT_EQ(labels[i], patch.class_id);
                EXPECT_EQ(patch.points.points[k], cloud.points[i]);
                ++seen[i];
            }
        }
        for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(seen[i], labels[i] == kIgnore ? 0 : 1);
    }
}

TEST(FilterPseudoLabels, Examples) {
    const Prediction p{{1, 2}, {0.9f, 0.5f}};
    EXPECT_EQ(filter_pseudo_labels(p, 0.85), (LabelArray{1, kIgnore}));
    EXPECT_EQ(filter_pseudo_labels(p, 0.0), (LabelArray{1, 2}));
}

TEST(FilterPseudoLabels, RetainedFractionMatchesSortOracleAndIsMonotone) {
    Rng rng(4);
    Prediction p;
    for (int i = 0; i < 1000; ++i) {
        p.classes.push_back(static_cast<ClassId>(rng.below(4)));
        p.confidence.push_back(static_cast<float>(rng.uniform()));
    }
    auto sorted = p.confidence;
    std::sort(sorted.begin(), sorted.end());
    LabelArray previous = filter_pseudo_labels(p, 0.0);
    for (double zeta = 0.05; zeta < 1.0; zeta += 0.05) {
        const auto kept = filter_pseudo_labels(p, zeta);
        const auto n_kept = std::count_if(kept.begin(), kept.end(), [](ClassId l) { return l != kIgnore; });
        const auto oracle = sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), zeta,
                                                            [](float c, double z) { return c < z; });
        EXPECT_EQ(n_kept, oracle);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (kept[i] != kIgnore) EXPECT_EQ(previous[i], kept[i]);
        }
        previous = kept;
    }
}

TEST(CalibrateZeta, TenValues) {
    std::vector<float> sample;
    for (int i = 1; i <= 10; ++i) sample.push_back(static_cast<float>(i) / 10.0f);
    const double zeta = calibrate_zeta(sample, 0.8);
    EXPECT_NEAR(zeta, 0.3, 1e-6);
    Prediction p{LabelArray(10, 1), sample};
    const auto kept = filter_pseudo_labels(p, zeta);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), ClassId{1}), 8);
}

TEST(CalibrateZeta, NearOneKeepsEverything) {
    const std::vector<float> sample{0.4f, 0.9f, 0.2f, 0.6f};
    EXPECT_LE(calibrate_zeta(sample, 1.0 - 1e-9), 0.2f);
}

TEST(CalibrateZeta, ConstantSample) {
    const std::vector<float> sample(20, 0.7f);
    for (double f : {0.1, 0.5, 0.9}) EXPECT_EQ(calibrate_zeta(sample, f), 0.7f);
}

TEST(CalibrateZeta, EmptySample) {
    EXPECT_EQ(error_code_of([] { calibrate_zeta(std::span<const float>{}, 0.8); }), ErrorCode::EmptySample);
}

TEST(Histogram, FileRoundTrip) {
    testing::TempDir dir;
    const auto h = histogram_of({{0, 3}, {4, 100}, {65534, 1}});
    write_histogram(h, dir / "h.txt");
    EXPECT_EQ(read_histogram(dir / "h.txt"), h);
}

}  // namespace
}  // namespace cosmix
