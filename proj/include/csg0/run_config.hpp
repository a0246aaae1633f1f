#pragma once

#include "csg0/netblocks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace csg0 {

using Json = nlohmann::json;

// Per-step training settings.
struct TaskConfig {
    std::size_t iterations = 200;
    std::size_t batch_size = 1;
    double lr = 2e-4;
    std::uint64_t seed = 0;
    std::size_t dataset_size = 300;
    std::optional<std::size_t> subset_size;
    bool operator==(const TaskConfig&) const = default;
};

struct RunConfig {
    std::filesystem::path registry;
    std::vector<std::filesystem::path> domains; // one domain spec per stream step
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    std::vector<TaskConfig> tasks; // one per stream step
    std::filesystem::path output_dir = "runs";

    const TaskConfig& task(std::size_t step) const;
};

// Strict conversions: unknown keys and wrong types raise ConfigError.
Json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const Json& j);
Json to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const Json& j);
Json to_json(const TaskConfig& c);
TaskConfig task_config_from_json(const Json& j);
Json to_json(const RunConfig& c);

// Relative paths resolve against `base_dir` (the config file's directory).
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace csg0
