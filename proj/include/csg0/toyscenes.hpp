#pragma once

#include "csg0/labelspace.hpp"
#include "csg0/run_config.hpp"
#include "csg0/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace csg0 {

// Where a class is drawn in the layered layout.
enum class ClassRole { Sky, Background, Building, Sidewalk, Road, Object, Attachment, Pole, Marking };

struct ClassStyle {
    int id = 0; // continual id
    std::string name;
    ClassRole role = ClassRole::Object;
    std::array<double, 3> color{0.0, 0.0, 0.0}; // base RGB in [-1,1]
    double noise = 0.0;                         // noise amplitude
    std::size_t stripe_period = 0;              // rows; 0 = no stripes
    double stripe_amplitude = 0.0;
    double probability = 1.0; // chance the class appears in a scene
};

struct LayoutSpec {
    std::array<double, 2> sky_fraction{0.2, 0.35};
    std::array<double, 2> road_fraction{0.25, 0.4};
    std::array<std::size_t, 2> buildings{1, 3};
    std::array<std::size_t, 2> objects{1, 2}; // instances per present object class
};

struct DomainSpec {
    std::string domain;
    std::size_t height = 32;
    std::size_t width = 48;
    std::vector<ClassStyle> classes;
    LayoutSpec layout;

    const ClassStyle& style(int id) const;
    bool has_class(int id) const;
};

/// JSON schema:
///   {"domain": str, "height": int, "width": int,
///    "layout": {"sky_fraction": [lo, hi], "road_fraction": [lo, hi],
///               "buildings": [min, max], "objects": [min, max]},
///    "classes": [{"id": int, "name": str, "role": sky|background|building|
///                 sidewalk|road|object|attachment|pole|marking,
///                 "color": [r, g, b], "noise": real, "stripe_period": int,
///                 "stripe_amplitude": real, "probability": real}, ...]}
/// Exactly one sky and one road class are required.
DomainSpec domain_spec_from_json(const Json& j);
Json to_json(const DomainSpec& spec);
DomainSpec load_domain_spec(const std::filesystem::path& path);

// Throws ValidationError unless every class id is usable in the spec's domain.
void check_spec_against(const DomainSpec& spec, const LabelRegistry& registry);

struct Scene {
    SemanticMap mask;
    Tensor image; // [1,3,H,W] in [-1,1]
    std::uint64_t seed = 0;
};

// Stateless per-pixel noise in [-1,1].
double pixel_noise(std::uint64_t seed, std::size_t i, std::size_t j, std::size_t channel);

SemanticMap generate_layout(const DomainSpec& spec, std::uint64_t seed);
Tensor render(const SemanticMap& mask, const DomainSpec& spec, std::uint64_t seed);
Scene generate_scene(const DomainSpec& spec, std::uint64_t seed);

// Scenes with seeds seed .. seed+n-1; a prefix is a valid smaller dataset.
std::vector<Scene> make_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t seed);

} // namespace csg0
