#include "cosmix/toybench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cosmix::toybench {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Placement {
    double rho_min;
    double rho_margin;  // objects stay this far inside the scene radius
};

double surface_area(const Primitive& p) {
    const auto& e = p.extent;
    switch (p.shape) {
        case Shape::Disc: return std::numbers::pi * e[0] * e[0];
        case Shape::Box: return 2.0 * (2.0 * e[0] + 2.0 * e[1]) * e[2] + 4.0 * e[0] * e[1];
        case Shape::Cylinder: return kTwoPi * e[0] * e[2];
        case Shape::Ellipsoid: {
            // Knud Thomsen's approximation.
            constexpr double q = 1.6075;
            const double ab = std::pow(e[0] * e[1], q), ac = std::pow(e[0] * e[2], q), bc = std::pow(e[1] * e[2], q);
            return 4.0 * std::numbers::pi * std::pow((ab + ac + bc) / 3.0, 1.0 / q);
        }
    }
    return 0.0;
}

std::array<double, 2> place(double scene_radius, Placement where, Rng& rng) {
    const double rho = rng.uniform(where.rho_min, std::max(where.rho_min, scene_radius - where.rho_margin));
    const double phi = rng.uniform(0.0, kTwoPi);
    return {rho * std::cos(phi), rho * std::sin(phi)};
}

Primitive make_object(ToyClass cls, double scene_radius, Rng& rng) {
    Primitive p;
    p.cls = cls;
    p.yaw = rng.uniform(0.0, kTwoPi);
    switch (cls) {
        case ToyClass::Building: {
            p.shape = Shape::Box;
            const auto xy = place(scene_radius, {15.0, 8.0}, rng);
            p.center = {xy[0], xy[1], 0.0};
            p.extent = {rng.uniform(3.0, 7.0), rng.uniform(3.0, 7.0), rng.uniform(4.0, 10.0)};
            break;
        }
        case ToyClass::Vehicle: {
            p.shape = Shape::Box;
            const auto xy = place(scene_radius, {4.0, 4.0}, rng);
            p.center = {xy[0], xy[1], 0.0};
            p.extent = {2.1, 0.9, rng.uniform(1.3, 1.7)};
            break;
        }
        case ToyClass::Pole: {
            p.shape = Shape::Cylinder;
            const auto xy = place(scene_radius, {3.0, 3.0}, rng);
            p.center = {xy[0], xy[1], 0.0};
            p.extent = {0.15, 0.0, rng.uniform(4.0, 8.0)};
            break;
        }
        case ToyClass::Vegetation: {
            p.shape = Shape::Ellipsoid;
            const auto xy = place(scene_radius, {5.0, 5.0}, rng);
            p.center = {xy[0], xy[1], rng.uniform(2.0, 4.0)};
            p.extent = {rng.uniform(1.5, 3.0), rng.uniform(1.5, 3.0), rng.uniform(1.2, 2.5)};
            break;
        }
        case ToyClass::Ground:
            p.shape = Shape::Disc;
            p.extent = {scene_radius, 0.0, 0.0};
            break;
    }
    return p;
}

std::array<double, 3> sample_surface(const Primitive& p, Rng& rng) {
    const auto& c = p.center;
    const auto& e = p.extent;
    switch (p.shape) {
        case Shape::Disc: {
            const double r = e[0] * std::sqrt(rng.uniform());
            const double phi = rng.uniform(0.0, kTwoPi);
            return {r * std::cos(phi), r * std::sin(phi), 0.0};
        }
        case Shape::Cylinder: {
            const double phi = rng.uniform(0.0, kTwoPi);
            return {c[0] + e[0] * std::cos(phi), c[1] + e[0] * std::sin(phi), rng.uniform(0.0, e[2])};
        }
        case Shape::Ellipsoid: {
            double v[3];
            double norm = 0.0;
            do {
                for (double& x : v) x = rng.normal(0.0, 1.0);
                norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            } while (norm < 1e-12);
            return {c[0] + e[0] * v[0] / norm, c[1] + e[1] * v[1] / norm, c[2] + e[2] * v[2] / norm};
        }
        case Shape::Box: {
            // Faces: +x, -x, +y, -y walls and the roof; the floor is hidden.
            const double hx = e[0], hy = e[1], h = e[2];
            const double wall_x = 2.0 * hy * h, wall_y = 2.0 * hx * h, roof = 4.0 * hx * hy;
            const double u = rng.uniform() * (2.0 * wall_x + 2.0 * wall_y + roof);
            double lx = 0.0, ly = 0.0, lz = rng.uniform(0.0, h);
            if (u < 2.0 * wall_x) {
                lx = u < wall_x ? hx : -hx;
                ly = rng.uniform(-hy, hy);
            } else if (u < 2.0 * wall_x + 2.0 * wall_y) {
                ly = u < 2.0 * wall_x + wall_y ? hy : -hy;
                lx = rng.uniform(-hx, hx);
            } else {
                lx = rng.uniform(-hx, hx);
                ly = rng.uniform(-hy, hy);
                lz = h;
            }
            const double cs = std::cos(p.yaw), sn = std::sin(p.yaw);
            return {c[0] + cs * lx - sn * ly, c[1] + sn * lx + cs * ly, lz};
        }
    }
    return {0.0, 0.0, 0.0};
}

}  // namespace

ClassSet classes() {
    return ClassSet({{1, "ground"}, {2, "building"}, {3, "pole"}, {4, "vehicle"}, {5, "vegetation"}}, 0);
}

void SceneSpec::check() const {
    if (!(scene_radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "scene radius must be positive");
    if (!(density > 0.0)) throw Error(ErrorCode::InvalidConfig, "density must be positive");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise sigma must be >= 0");
    double sum = 0.0;
    for (double w : abundance) {
        if (!(w >= 0.0)) throw Error(ErrorCode::InvalidConfig, "abundance weights must be >= 0");
        sum += w;
    }
    if (!(sum > 0.0)) throw Error(ErrorCode::InvalidConfig, "abundance weights are all zero");
    for (const auto& range : objects) {
        if (range[0] > range[1]) throw Error(ErrorCode::InvalidConfig, "object count range is reversed");
    }
    for (const auto& m : intensity) {
        if (!(m.stddev >= 0.0)) throw Error(ErrorCode::InvalidConfig, "intensity stddev must be >= 0");
    }
}

std::size_t SceneSpec::point_budget() const {
    return static_cast<std::size_t>(std::llround(density * std::numbers::pi * scene_radius * scene_radius));
}

SceneSpec default_source_spec(std::uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    return spec;
}

SceneSpec default_target_spec(std::uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.density = 0.5;
    spec.noise_sigma = 0.08;
    spec.abundance = {0.40, 0.15, 0.08, 0.15, 0.22};
    // Different sensor calibration: a compressed, offset and noisier response
    // that keeps the per-class ordering.
    for (auto& m : spec.intensity) {
        m.mean = 0.6 * m.mean + 0.25;
        m.stddev = 0.07;
    }
    return spec;
}

Scene generate_scene_with_layout(const SceneSpec& spec, Rng& rng) {
    spec.check();
    const std::size_t budget = spec.point_budget();
    double weight_sum = 0.0;
    for (double w : spec.abundance) weight_sum += w;

    Scene scene;
    auto& cloud = scene.scan.cloud.points;
    auto& labels = scene.scan.labels;
    cloud.reserve(budget + kNumClasses);
    labels.reserve(budget + kNumClasses);

    for (std::size_t ci = 0; ci < kNumClasses; ++ci) {
        const auto cls = static_cast<ToyClass>(ci + 1);
        const auto n_class =
            static_cast<std::size_t>(std::llround(static_cast<double>(budget) * spec.abundance[ci] / weight_sum));
        if (n_class == 0) continue;

        std::vector<Primitive> objects;
        if (cls == ToyClass::Ground) {
            objects.push_back(make_object(cls, spec.scene_radius, rng));
        } else {
            const auto [lo, hi] = spec.objects[ci];
            const std::size_t count = std::max<std::size_t>(1, lo + rng.below(hi - lo + 1));
            for (std::size_t k = 0; k < count; ++k) objects.push_back(make_object(cls, spec.scene_radius, rng));
        }

        std::vector<double> areas;
        double area_sum = 0.0;
        for (const auto& o : objects) {
            areas.push_back(surface_area(o));
            area_sum += areas.back();
        }
        std::vector<std::size_t> per_object(objects.size(), 0);
        for (std::size_t k = 0; k < n_class; ++k) {
            double u = rng.uniform() * area_sum;
            std::size_t pick = objects.size() - 1;
            for (std::size_t o = 0; o < objects.size(); ++o) {
                if (u < areas[o]) {
                    pick = o;
                    break;
                }
                u -= areas[o];
            }
            ++per_object[pick];
        }

        const IntensityModel& im = spec.intensity[ci];
        for (std::size_t o = 0; o < objects.size(); ++o) {
            Primitive& prim = objects[o];
            prim.first_point = cloud.size();
            prim.point_count = per_object[o];
            for (std::size_t k = 0; k < per_object[o]; ++k) {
                auto xyz = sample_surface(prim, rng);
                if (spec.noise_sigma > 0.0) {
                    for (double& v : xyz) v += rng.normal(0.0, spec.noise_sigma);
                }
                const double intensity =
                    std::clamp(im.stddev > 0.0 ? rng.normal(im.mean, im.stddev) : im.mean, 0.0, 1.0);
                cloud.push_back({static_cast<float>(xyz[0]), static_cast<float>(xyz[1]),
                                 static_cast<float>(xyz[2]), static_cast<float>(intensity)});
                labels.push_back(static_cast<ClassId>(cls));
            }
            scene.primitives.push_back(prim);
        }
    }
    return scene;
}

LabeledScan generate_scene(const SceneSpec& spec, Rng& rng) { return generate_scene_with_layout(spec, rng).scan; }

LabeledScan generate_scene(const SceneSpec& spec) {
    Rng rng(spec.seed);
    return generate_scene(spec, rng);
}

Dataset make_dataset(const SceneSpec& spec, std::size_t n_scans) {
    Dataset out;
    out.reserve(n_scans);
    for (std::size_t i = 0; i < n_scans; ++i) {
        Rng rng = Rng::stream(spec.seed, i);
        out.push_back(generate_scene(spec, rng));
    }
    return out;
}

DomainPair make_domain_pair(const SceneSpec& source_spec, const SceneSpec& target_spec, std::size_t n_scans) {
    return {make_dataset(source_spec, n_scans), make_dataset(target_spec, n_scans)};
}

AdaptationConfig adaptation_config(std::uint64_t seed) {
    AdaptationConfig cfg;
    cfg.epochs_warmup = 10;
    cfg.epochs_adapt = 6;
    cfg.batch_size = 4;
    cfg.selection.alpha = 0.5;
    cfg.zeta_target_fraction = 0.8;
    cfg.optim.lr = 5.0;
    cfg.optim.beta = 0.99;
    cfg.optim.gamma = 1;
    cfg.seed = seed;
    return cfg;
}

ToyConfig segmenter_config() { return ToyConfig{.voxel_size = 1.0, .scene_radius = 50.0}; }

}  // namespace cosmix::toybench
