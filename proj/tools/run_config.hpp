#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cosmix/adaptation.hpp"
#include "cosmix/segmenter.hpp"

namespace cosmix::cli {

/// Everything a subcommand can be configured with. Starts from the toy
/// benchmark presets; a config file and then `--set` flags override fields.
struct RunConfig {
    AdaptationConfig adapt;
    ToyConfig segmenter;
    std::vector<ClassEntry> classes;
    ClassId unlabeled_id = 0;
    std::optional<std::filesystem::path> source_class_map;
    std::size_t checkpoint_every = 1;  // epochs between numbered checkpoints, 0 = never

    RunConfig();

    ClassSet class_set() const { return ClassSet(classes, unlabeled_id); }

    /// Throws InvalidConfig for unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);

    /// Flat `key = value` lines; `#` starts a comment.
    void load_file(const std::filesystem::path& path);

    /// Applies one `key=value` override.
    void apply_override(std::string_view assignment);

    /// Known keys, sorted.
    static std::vector<std::string> keys();
};

}  // namespace cosmix::cli
