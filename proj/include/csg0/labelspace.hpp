#pragma once

#include "csg0/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csg0 {

struct ClassDef {
    std::string domain;
    std::string name;
    int orig_id = -1; // -1: class registered for the domain but absent from its data
    int cont_id = 0;
};

// Label-space accounting for one step of the domain stream.
struct StepInfo {
    std::string domain;
    std::size_t old_count = 0; // classes introduced by earlier steps
    std::size_t new_count = 0; // classes introduced here; step 0 counts its full set
    int first_new_id = 0;      // new ids are the contiguous range [first, first + new_count)

    std::size_t total() const { return old_count + new_count; }
};

/// Ordered domain stream with per-class continual ids. Immutable once built.
class LabelRegistry {
  public:
    static LabelRegistry from_csv(std::string_view text);
    static LabelRegistry from_file(const std::filesystem::path& path);

    std::string to_csv() const;

    const std::vector<ClassDef>& defs() const { return defs_; }
    std::size_t num_steps() const { return steps_.size(); }
    const StepInfo& step(std::size_t k) const;
    const std::vector<std::string>& domains() const { return domains_; }
    std::size_t step_of(std::string_view domain) const;
    bool has_domain(std::string_view domain) const;

    // C_o + C_n through step k.
    std::size_t class_count(std::size_t k) const { return step(k).total(); }
    std::size_t total_classes() const { return steps_.empty() ? 0 : steps_.back().total(); }

    int remap(std::string_view domain, int orig_id) const;
    // Name lookup covers the orig_id = -1 rows, which have no usable original id.
    int remap_name(std::string_view domain, std::string_view name) const;

    std::size_t step_introduced(int cont_id) const;
    bool registered(std::string_view domain, int cont_id) const;
    // Continual ids that can appear in the domain's masks (orig_id >= 0).
    std::vector<int> sampleable_ids(std::string_view domain) const;

  private:
    std::vector<ClassDef> defs_;
    std::vector<std::string> domains_;
    std::vector<StepInfo> steps_;
    std::map<std::pair<std::string, int>, int, std::less<>> by_orig_;
    std::vector<std::size_t> introduced_at_;
};

struct SemanticMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<int> labels; // row-major continual ids

    SemanticMap() = default;
    SemanticMap(std::size_t h, std::size_t w, int fill = 0) : height(h), width(w), labels(h * w, fill) {}

    int at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
    int& at(std::size_t i, std::size_t j) { return labels[i * width + j]; }
    bool operator==(const SemanticMap&) const = default;
};

SemanticMap resize_nearest(const SemanticMap& map, std::size_t height, std::size_t width);

// Throws ValidationError if any label is unknown to `domain` or comes from a later step.
void validate_map(const SemanticMap& map, const LabelRegistry& registry, std::string_view domain);

struct OneHotSplit {
    Tensor old_classes; // [1, C_o, H, W]
    Tensor new_classes; // [1, C_n, H, W]
    Tensor new_mask;    // [1, 1, H, W]
};

/// One-hot encodes `map` over the C_o + C_n classes of continual `step`
/// and splits at channel C_o. Old-class pixels are zero vectors in the
/// new tensor and vice versa.
OneHotSplit encode_split(const SemanticMap& map, const LabelRegistry& registry, std::size_t step);

// Generalised split used by the generator: one group per step that
// introduced classes, up to and including `step`.
struct LabelGroup {
    Tensor onehot;    // [N, C_n(g), h, w]
    Tensor mask;      // [N, 1, h, w]; 1 where the pixel's class belongs to this group
    bool any = false; // some pixel belongs to the group
    bool all = false; // every pixel belongs to the group
};

std::vector<LabelGroup> encode_groups(std::span<const SemanticMap> maps, const LabelRegistry& registry,
                                      std::size_t step, std::size_t height, std::size_t width);

// Plain one-hot over `classes` channels: [N, classes, H, W].
Tensor encode_onehot(std::span<const SemanticMap> maps, std::size_t classes);

/// alpha_c = total_pixels / (C * count_c); classes that never occur get 0.
std::vector<double> class_frequencies(std::span<const SemanticMap> dataset, std::size_t classes);

} // namespace csg0
