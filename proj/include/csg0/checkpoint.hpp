#pragma once

#include "csg0/netblocks.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace csg0 {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(std::string_view bytes);

struct Section {
    std::string name; // "config", "registry", "base", "delta/<step>"
    std::string payload;
    std::uint64_t digest = 0;
};

/// Layout: "CSG0", u32 version, u32 section count, then per section
/// u32 name length, name, u64 payload length, payload, u64 FNV-1a digest.
/// All integers and reals little-endian.
std::string encode_checkpoint(const GeneratorModel& model);
GeneratorModel decode_checkpoint(std::string_view bytes);

// Parses the container only; digests are checked against the payloads.
std::vector<Section> read_sections(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const GeneratorModel& model);
GeneratorModel load_checkpoint(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

} // namespace csg0
