#include "csg0/run_config.hpp"

#include "csg0/errors.hpp"

#include <fstream>
#include <set>

namespace csg0 {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": key '" + key + "' has the wrong type");
    }
}

// Non-negative integers only; nlohmann would silently wrap -1.
void read_size(const Json& j, const char* key, std::size_t& out, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    if (!j.at(key).is_number_unsigned()) {
        throw ConfigError(where + ": key '" + key + "' must be a non-negative integer");
    }
    out = j.at(key).get<std::size_t>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
    return p.is_absolute() || base.empty() ? p : base / p;
}

} // namespace

const TaskConfig& RunConfig::task(std::size_t step) const {
    if (step >= tasks.size()) {
        throw ConfigError("no task configured for step " + std::to_string(step));
    }
    return tasks[step];
}

Json to_json(const GeneratorConfig& c) {
    return {{"blocks", c.blocks},       {"channels", c.channels},   {"hidden", c.hidden},
            {"z_dim", c.z_dim},         {"height", c.height},       {"width", c.width},
            {"kernel", c.kernel},       {"norm_eps", c.norm_eps},   {"std_floor", c.std_floor},
            {"slope", c.slope}};
}

GeneratorConfig generator_config_from_json(const Json& j) {
    const std::string where = "generator config";
    check_keys(j, {"blocks", "channels", "hidden", "z_dim", "height", "width", "kernel", "norm_eps", "std_floor", "slope"},
               where);
    GeneratorConfig c;
    read_size(j, "blocks", c.blocks, where);
    read(j, "channels", c.channels, where);
    read_size(j, "hidden", c.hidden, where);
    read_size(j, "z_dim", c.z_dim, where);
    read_size(j, "height", c.height, where);
    read_size(j, "width", c.width, where);
    read_size(j, "kernel", c.kernel, where);
    read(j, "norm_eps", c.norm_eps, where);
    read(j, "std_floor", c.std_floor, where);
    read(j, "slope", c.slope, where);
    c.validate();
    return c;
}

Json to_json(const DiscriminatorConfig& c) { return {{"channels", c.channels}, {"slope", c.slope}}; }

DiscriminatorConfig discriminator_config_from_json(const Json& j) {
    const std::string where = "discriminator config";
    check_keys(j, {"channels", "slope"}, where);
    DiscriminatorConfig c;
    read(j, "channels", c.channels, where);
    read(j, "slope", c.slope, where);
    if (c.channels.empty()) {
        throw ConfigError(where + ": channels must not be empty");
    }
    return c;
}

Json to_json(const TaskConfig& c) {
    Json j{{"iterations", c.iterations}, {"batch_size", c.batch_size}, {"lr", c.lr},
           {"seed", c.seed},             {"dataset_size", c.dataset_size}};
    if (c.subset_size) {
        j["subset_size"] = *c.subset_size;
    }
    return j;
}

TaskConfig task_config_from_json(const Json& j) {
    const std::string where = "task config";
    check_keys(j, {"iterations", "batch_size", "lr", "seed", "dataset_size", "subset_size"}, where);
    TaskConfig c;
    read_size(j, "iterations", c.iterations, where);
    read_size(j, "batch_size", c.batch_size, where);
    read(j, "lr", c.lr, where);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) {
            throw ConfigError(where + ": key 'seed' must be a non-negative integer");
        }
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    read_size(j, "dataset_size", c.dataset_size, where);
    if (j.contains("subset_size")) {
        std::size_t s = 0;
        read_size(j, "subset_size", s, where);
        c.subset_size = s;
    }
    if (c.batch_size == 0 || c.dataset_size == 0) {
        throw ConfigError(where + ": batch_size and dataset_size must be positive");
    }
    if (!(c.lr > 0.0)) {
        throw ConfigError(where + ": lr must be positive");
    }
    if (c.subset_size && (*c.subset_size == 0 || *c.subset_size > c.dataset_size)) {
        throw ConfigError(where + ": subset_size must be in [1, dataset_size]");
    }
    return c;
}

Json to_json(const RunConfig& c) {
    Json domains = Json::array();
    for (const auto& d : c.domains) {
        domains.push_back(d.string());
    }
    Json tasks = Json::array();
    for (const auto& t : c.tasks) {
        tasks.push_back(to_json(t));
    }
    return {{"registry", c.registry.string()},
            {"domains", domains},
            {"generator", to_json(c.generator)},
            {"discriminator", to_json(c.discriminator)},
            {"tasks", tasks},
            {"output_dir", c.output_dir.string()}};
}

RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    const std::string where = "run config";
    check_keys(j, {"registry", "domains", "generator", "discriminator", "tasks", "output_dir"}, where);
    for (const char* key : {"registry", "domains", "tasks"}) {
        if (!j.contains(key)) {
            throw ConfigError(where + ": missing required key '" + key + "'");
        }
    }
    RunConfig c;
    std::string registry;
    read(j, "registry", registry, where);
    c.registry = resolve(base_dir, registry);
    std::vector<std::string> domains;
    read(j, "domains", domains, where);
    for (const auto& d : domains) {
        c.domains.push_back(resolve(base_dir, d));
    }
    if (j.contains("generator")) {
        c.generator = generator_config_from_json(j.at("generator"));
    }
    if (j.contains("discriminator")) {
        c.discriminator = discriminator_config_from_json(j.at("discriminator"));
    }
    if (!j.at("tasks").is_array()) {
        throw ConfigError(where + ": 'tasks' must be an array");
    }
    for (const auto& t : j.at("tasks")) {
        c.tasks.push_back(task_config_from_json(t));
    }
    if (c.domains.empty() || c.tasks.size() != c.domains.size()) {
        throw ConfigError(where + ": need one task per domain (" + std::to_string(c.domains.size()) + " domains, " +
                          std::to_string(c.tasks.size()) + " tasks)");
    }
    std::string out = c.output_dir.string();
    read(j, "output_dir", out, where);
    c.output_dir = resolve(base_dir, out);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

} // namespace csg0
