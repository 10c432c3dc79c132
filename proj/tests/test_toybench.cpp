#include <gtest/gtest.h>

#include <cmath>

#include "cosmix/toybench.hpp"
#include "test_util.hpp"

namespace cosmix::toybench {
namespace {

TEST(GenerateScene, NoiselessPoleLiesOnCylinder) {
    SceneSpec spec;
    spec.noise_sigma = 0.0;
    spec.abundance = {0.5, 0.0, 0.5, 0.0, 0.0};
    spec.objects[class_index(ToyClass::Pole)] = {1, 1};
    Rng rng(4);
    const auto scene = generate_scene_with_layout(spec, rng);
    const Primitive* pole = nullptr;
    for (const auto& p : scene.primitives) {
        if (p.cls == ToyClass::Pole) pole = &p;
    }
    ASSERT_NE(pole, nullptr);
    ASSERT_GT(pole->point_count, 0u);
    std::size_t non_ground = 0;
    for (std::size_t i = 0; i < scene.scan.labels.size(); ++i) {
        const auto& pt = scene.scan.cloud.points[i];
        if (scene.scan.labels[i] == static_cast<ClassId>(ToyClass::Ground)) {
            EXPECT_EQ(pt.z, 0.0f);
            continue;
        }
        ++non_ground;
        const double r = std::hypot(pt.x - pole->center[0], pt.y - pole->center[1]);
        const double tol = 1e-6 * std::max({1.0, std::abs(double(pt.x)), std::abs(double(pt.y))});
        EXPECT_NEAR(r, pole->extent[0], tol);
        EXPECT_GE(pt.z, 0.0f);
        EXPECT_LE(pt.z, pole->extent[2] + 1e-6);
    }
    EXPECT_EQ(non_ground, pole->point_count);
}

TEST(GenerateScene, ClassHistogramTracksAbundance) {
    const auto spec = default_source_spec(3);
    std::array<double, kNumClasses> counts{};
    double total = 0.0;
    Rng rng(11);
    for (int s = 0; s < 100; ++s) {
        const auto scan = generate_scene(spec, rng);
        for (ClassId l : scan.labels) {
            counts[l - 1] += 1.0;
            total += 1.0;
        }
    }
    double weight_sum = 0.0;
    for (double w : spec.abundance) weight_sum += w;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double p = spec.abundance[c] / weight_sum;
        const double sigma = std::sqrt(p * (1 - p) / total);
        EXPECT_NEAR(counts[c] / total, p, 3 * sigma) << "class " << c + 1;
    }
}

TEST(GenerateScene, DeterministicInSpecAndSeed) {
    const auto spec = default_target_spec(9);
    const auto a = generate_scene(spec);
    const auto b = generate_scene(spec);
    EXPECT_EQ(a.cloud, b.cloud);
    EXPECT_EQ(a.labels, b.labels);
    auto other = spec;
    other.seed = 10;
    EXPECT_NE(generate_scene(other).cloud, a.cloud);
}

TEST(GenerateScene, InvalidSpecsRejected) {
    SceneSpec spec;
    spec.density = 0.0;
    EXPECT_EQ(testing::error_code_of([&] { generate_scene(spec); }), ErrorCode::InvalidConfig);
    spec = {};
    spec.noise_sigma = -0.1;
    EXPECT_EQ(testing::error_code_of([&] { generate_scene(spec); }), ErrorCode::InvalidConfig);
    spec = {};
    spec.abundance = {0, 0, 0, 0, 0};
    EXPECT_EQ(testing::error_code_of([&] { generate_scene(spec); }), ErrorCode::InvalidConfig);
}

TEST(DomainPair, HalfDensityHalvesPointCount) {
    const auto pair = make_domain_pair(default_source_spec(), default_target_spec(), 50);
    double src = 0, tgt = 0;
    for (const auto& s : pair.source) src += static_cast<double>(s.cloud.size());
    for (const auto& s : pair.target) tgt += static_cast<double>(s.cloud.size());
    EXPECT_NEAR(tgt / src, 0.5, 0.05);
}

TEST(DomainPair, IdenticalSpecsGiveMatchingDensity) {
    const auto a = make_dataset(default_source_spec(1), 20);
    const auto b = make_dataset(default_source_spec(2), 20);
    double na = 0, nb = 0;
    for (const auto& s : a) na += static_cast<double>(s.cloud.size());
    for (const auto& s : b) nb += static_cast<double>(s.cloud.size());
    EXPECT_NEAR(na / nb, 1.0, 0.01);
}

TEST(DomainPair, ScansValidAgainstSharedClasses) {
    const auto pair = make_domain_pair(default_source_spec(), default_target_spec(), 10);
    const auto cs = classes();
    for (const auto* ds : {&pair.source, &pair.target}) {
        for (const auto& s : *ds) {
            EXPECT_NO_THROW(validate(s.cloud, s.labels, cs));
            EXPECT_GT(s.cloud.size(), 1000u);
        }
    }
}

TEST(Presets, BenchmarkConfigsAreValid) {
    EXPECT_NO_THROW(adaptation_config(0).check());
    EXPECT_NO_THROW(segmenter_config().check());
    EXPECT_EQ(default_source_spec().point_budget(), 5027u);
}

}  // namespace
}  // namespace cosmix::toybench
