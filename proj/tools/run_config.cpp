#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cosmix/toybench.hpp"

namespace cosmix::cli {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
    throw Error(ErrorCode::InvalidConfig, "bad value '" + std::string(value) + "' for " + std::string(key));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) bad_value(key, value);
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    bad_value(key, value);
}

Bounds parse_bounds(std::string_view key, std::string_view value) {
    const auto comma = value.find(',');
    if (comma == std::string_view::npos) {
        const double v = parse_number<double>(key, value);
        return {v, v};
    }
    return {parse_number<double>(key, trim(value.substr(0, comma))),
            parse_number<double>(key, trim(value.substr(comma + 1)))};
}

// "1:ground,2:building" or bare ids "1,2".
std::vector<ClassEntry> parse_classes(std::string_view key, std::string_view value) {
    std::vector<ClassEntry> out;
    while (!value.empty()) {
        const auto comma = value.find(',');
        const auto item = trim(value.substr(0, comma));
        value = comma == std::string_view::npos ? std::string_view{} : value.substr(comma + 1);
        if (item.empty()) bad_value(key, item);
        const auto colon = item.find(':');
        const auto id = parse_number<ClassId>(key, trim(item.substr(0, colon)));
        std::string name = colon == std::string_view::npos ? std::to_string(id) : std::string(trim(item.substr(colon + 1)));
        out.push_back({id, std::move(name)});
    }
    if (out.empty()) bad_value(key, value);
    return out;
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = [] {
        std::map<std::string, Setter, std::less<>> t;
        auto size_field = [](std::size_t AdaptationConfig::*field) {
            return [field](RunConfig& c, auto k, auto v) { c.adapt.*field = parse_number<std::size_t>(k, v); };
        };
        auto flag = [](bool AblationFlags::*field) {
            return [field](RunConfig& c, auto k, auto v) { c.adapt.flags.*field = parse_bool(k, v); };
        };
        t["seed"] = [](RunConfig& c, auto k, auto v) { c.adapt.seed = parse_number<std::uint64_t>(k, v); };
        t["workers"] = size_field(&AdaptationConfig::workers);
        t["epochs_warmup"] = size_field(&AdaptationConfig::epochs_warmup);
        t["epochs_adapt"] = size_field(&AdaptationConfig::epochs_adapt);
        t["batch_size"] = size_field(&AdaptationConfig::batch_size);
        t["lr"] = [](RunConfig& c, auto k, auto v) { c.adapt.optim.lr = parse_number<double>(k, v); };
        t["beta"] = [](RunConfig& c, auto k, auto v) { c.adapt.optim.beta = parse_number<double>(k, v); };
        t["gamma"] = [](RunConfig& c, auto k, auto v) { c.adapt.optim.gamma = parse_number<std::size_t>(k, v); };
        t["alpha"] = [](RunConfig& c, auto k, auto v) { c.adapt.selection.alpha = parse_number<double>(k, v); };
        t["zeta"] = [](RunConfig& c, auto k, auto v) {
            c.adapt.selection.zeta = parse_number<double>(k, v);
            c.adapt.zeta_target_fraction.reset();
        };
        t["zeta_target_fraction"] = [](RunConfig& c, auto k, auto v) {
            if (v == "off" || v == "none") {
                c.adapt.zeta_target_fraction.reset();
            } else {
                c.adapt.zeta_target_fraction = parse_number<double>(k, v);
            }
        };
        t["subsample_target_classes"] = [](RunConfig& c, auto k, auto v) {
            c.adapt.selection.subsample_target_classes = parse_bool(k, v);
        };
        t["branch_s2t"] = flag(&AblationFlags::branch_s2t);
        t["branch_t2s"] = flag(&AblationFlags::branch_t2s);
        t["local_aug"] = flag(&AblationFlags::local_aug);
        t["global_aug"] = flag(&AblationFlags::global_aug);
        t["weighted_f"] = flag(&AblationFlags::weighted_f);
        t["ema"] = flag(&AblationFlags::ema);
        t["keep_fraction"] = [](RunConfig& c, auto k, auto v) {
            c.adapt.mix.local.keep_fraction = parse_number<double>(k, v);
        };
        t["local_rot_z"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.local.rot_z = parse_bounds(k, v); };
        t["local_scale"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.local.scale.fill(parse_bounds(k, v)); };
        t["global_rot_x"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.global.rotation[0] = parse_bounds(k, v); };
        t["global_rot_y"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.global.rotation[1] = parse_bounds(k, v); };
        t["global_rot_z"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.global.rotation[2] = parse_bounds(k, v); };
        t["global_translation"] = [](RunConfig& c, auto k, auto v) {
            c.adapt.mix.global.translation.fill(parse_bounds(k, v));
        };
        t["global_scale"] = [](RunConfig& c, auto k, auto v) { c.adapt.mix.global.scale.fill(parse_bounds(k, v)); };
        t["iou"] = [](RunConfig& c, auto k, auto v) {
            if (v == "exclude") {
                c.adapt.iou = IouConvention::ExcludeEmpty;
            } else if (v == "zero") {
                c.adapt.iou = IouConvention::ZeroEmpty;
            } else {
                bad_value(k, v);
            }
        };
        t["voxel_size"] = [](RunConfig& c, auto k, auto v) { c.segmenter.voxel_size = parse_number<double>(k, v); };
        t["scene_radius"] = [](RunConfig& c, auto k, auto v) { c.segmenter.scene_radius = parse_number<double>(k, v); };
        t["classes"] = [](RunConfig& c, auto k, auto v) { c.classes = parse_classes(k, v); };
        t["unlabeled_id"] = [](RunConfig& c, auto k, auto v) { c.unlabeled_id = parse_number<ClassId>(k, v); };
        t["source_class_map"] = [](RunConfig& c, auto, auto v) { c.source_class_map = std::filesystem::path(v); };
        t["checkpoint_every"] = [](RunConfig& c, auto k, auto v) { c.checkpoint_every = parse_number<std::size_t>(k, v); };
        return t;
    }();
    return table;
}

}  // namespace

RunConfig::RunConfig()
    : adapt(toybench::adaptation_config()),
      segmenter(toybench::segmenter_config()),
      classes(toybench::classes().entries()),
      unlabeled_id(toybench::classes().unlabeled_id()) {}

void RunConfig::set(std::string_view key, std::string_view value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
    it->second(*this, key, trim(value));
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = std::string_view(line);
        text = trim(text.substr(0, text.find('#')));
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::InvalidConfig, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        set(trim(text.substr(0, eq)), text.substr(eq + 1));
    }
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw Error(ErrorCode::InvalidConfig, "override '" + std::string(assignment) + "' is not key=value");
    }
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
}

}  // namespace cosmix::cli
