#pragma once

#include "csg0/labelspace.hpp"
#include "csg0/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csg0 {

// Ordered by name; this order is the optimizer's iteration order.
using ParamTable = std::map<std::string, Tensor>;

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = false;
    std::optional<std::size_t> domain_step; // nullopt: BASE
};

// ---------------------------------------------------------------------------
// Weight modulation

struct WeightStats {
    Tensor mean; // [Cout, Cin]
    Tensor std;  // [Cout, Cin], floored
};

/// Per-kernel mean and population std of W[Cout,Cin,K,K]; std is floored at `std_floor`.
WeightStats weight_stats(const Tensor& weight, double std_floor = 1e-5);

/// Effective weight alpha ⊙ (W − M) / S + beta, broadcast over each K×K kernel.
/// Kernels at the identity point alpha=S, beta=M come back as W bit-for-bit.
/// Gradients reach alpha and beta only.
Tensor modulate_weight(const Tensor& weight, const WeightStats& stats, const Tensor& alpha, const Tensor& beta);

/// A frozen conv whose effective parameters are re-derived per domain.
class ModulatedConv {
  public:
    struct Record {
        Tensor alpha;  // [Cout, Cin]
        Tensor beta;   // [Cout, Cin]
        Tensor b_conv; // [Cout]
    };

    ModulatedConv(Tensor weight, Tensor bias, double std_floor = 1e-5);

    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }
    const WeightStats& stats() const { return stats_; }

    // alpha = S, beta = M, b_conv = 0.
    Record identity_record() const;
    void set_record(std::size_t domain_step, Record record);
    bool has_record(std::size_t domain_step) const { return records_.contains(domain_step); }
    const Record& record(std::size_t domain_step) const;

    // (W_eff, b_eff) for the domain; LookupError if it has no record.
    std::pair<Tensor, Tensor> modulate(std::size_t domain_step) const;

  private:
    Tensor weight_;
    Tensor bias_;
    WeightStats stats_;
    std::map<std::size_t, Record> records_;
};

// ---------------------------------------------------------------------------
// cSPADE

/// Spatially-adaptive normalization over a label space split into groups:
/// group 0 (the base classes) goes through the base first conv together
/// with the replicated noise, each later group g through its own EL conv.
/// Every branch output is multiplied by its group mask before the sum.
struct CSpadeBlock {
    Tensor shared_w; // [hidden, C_0 + z_dim, K, K]
    Tensor shared_b;
    std::vector<std::pair<Tensor, Tensor>> el; // (w, b) for groups 1..k
    Tensor scale_w;                             // [F, hidden, K, K]
    Tensor scale_b;
    Tensor shift_w;
    Tensor shift_b;
    Tensor affine_gamma; // [F]
    Tensor affine_beta;
    double eps = 1e-5;

    // Masked, summed first-conv output [N, hidden, h, w] (before the ReLU).
    Tensor first_conv(const std::vector<LabelGroup>& groups, const Tensor& noise) const;
    // IN(features)·(1 + scale) + shift.
    Tensor forward(const Tensor& features, const std::vector<LabelGroup>& groups, const Tensor& noise) const;
};

// Two-group view of an old/new split.
std::vector<LabelGroup> groups_from_split(const OneHotSplit& split);

// ---------------------------------------------------------------------------
// Generator

struct GeneratorConfig {
    std::size_t blocks = 3;
    std::vector<std::size_t> channels{64, 32, 16}; // input width of each residual block
    std::size_t hidden = 32;                       // cSPADE hidden width
    std::size_t z_dim = 8;
    std::size_t height = 32;
    std::size_t width = 48;
    std::size_t kernel = 3;
    double norm_eps = 1e-5;
    double std_floor = 1e-5;
    double slope = 0.2;

    void validate() const;
    std::size_t block_out(std::size_t i) const { return channels[std::min(i + 1, blocks - 1)]; }
    std::size_t block_mid(std::size_t i) const { return std::min(channels[i], block_out(i)); }
    std::size_t res_height(std::size_t i) const { return height >> (blocks - 1 - i); }
    std::size_t res_width(std::size_t i) const { return width >> (blocks - 1 - i); }
    bool operator==(const GeneratorConfig&) const = default;
};

struct DomainDelta {
    std::string domain;
    std::size_t step = 0;
    ParamTable params;
};

/// Stack of residual cSPADE blocks. Step 0 is a plain OASIS-style generator
/// whose parameters form the BASE table; every later step owns a delta table
/// (EL convs, modulation records, instance-norm affines) and reads nothing
/// from other domains' deltas.
class GeneratorModel {
  public:
    GeneratorModel(GeneratorConfig config, LabelRegistry registry, std::uint64_t seed);
    static GeneratorModel from_parts(GeneratorConfig config, LabelRegistry registry, ParamTable base,
                                     std::vector<DomainDelta> deltas);

    GeneratorModel(GeneratorModel&&) = default;
    GeneratorModel& operator=(GeneratorModel&&) = default;
    GeneratorModel(const GeneratorModel&) = delete;
    GeneratorModel& operator=(const GeneratorModel&) = delete;
    GeneratorModel clone() const;

    const GeneratorConfig& config() const { return config_; }
    const LabelRegistry& registry() const { return registry_; }
    const ParamTable& base() const { return base_; }
    const std::vector<DomainDelta>& deltas() const { return deltas_; }
    std::size_t trained_steps() const { return 1 + deltas_.size(); }
    std::size_t domain_step(std::string_view domain) const;

    /// Images [N,3,H,W] in [-1,1] for noise z [N,z_dim] and N label maps.
    Tensor forward(const Tensor& z, std::span<const SemanticMap> maps, std::string_view domain) const;

    // Adds the delta for `step` (== trained_steps()): zero EL conv for the
    // new classes, earlier EL convs, modulation records and IN affines copied
    // from the previous domain (identity modulation for the base domain).
    void init_continual(std::size_t step);

    // Every parameter with its BASE/domain tag; trainable = belongs to the
    // newest step (BASE only while no delta exists).
    std::vector<Parameter> parameters() const;
    std::vector<Tensor> trainable_tensors() const;

    std::size_t base_size() const;
    std::size_t delta_size(std::size_t step) const;

    // cSPADE parameters of (block, norm index) as seen by `step`.
    CSpadeBlock cspade_block(std::size_t block, std::size_t index, std::size_t step) const;

  private:
    GeneratorModel() = default;
    void build_modulated();
    void apply_trainable_flags();
    const Tensor& lookup(std::size_t step, const std::string& name) const;
    Tensor modulated_conv(const std::string& prefix, const Tensor& x, std::size_t step) const;

    GeneratorConfig config_;
    LabelRegistry registry_;
    ParamTable base_;
    std::vector<DomainDelta> deltas_;
    std::map<std::string, ModulatedConv> modulated_;
};

// Names of the BASE convs that receive per-domain weight modulation.
std::vector<std::string> modulated_conv_names(const GeneratorConfig& config);

// Closed-form size of one continual step's delta for `step` of `registry`.
std::size_t continual_param_count(const GeneratorConfig& config, const LabelRegistry& registry, std::size_t step);

// ---------------------------------------------------------------------------
// Discriminator

struct DiscriminatorConfig {
    std::vector<std::size_t> channels{16, 32, 32};
    double slope = 0.2;
    bool operator==(const DiscriminatorConfig&) const = default;
};

/// U-Net style per-pixel classifier: logits [N, out_channels, H, W] for
/// input [N, 3, H, W]. H and W must be divisible by 2^(levels-1).
class DiscriminatorModel {
  public:
    DiscriminatorModel(DiscriminatorConfig config, std::size_t out_channels, std::uint64_t seed);
    static DiscriminatorModel from_params(DiscriminatorConfig config, std::size_t out_channels, ParamTable params);

    Tensor forward(const Tensor& x) const;

    const DiscriminatorConfig& config() const { return config_; }
    std::size_t out_channels() const { return out_channels_; }
    const ParamTable& params() const { return params_; }
    std::vector<Tensor> tensors() const;
    void set_trainable(bool on);

  private:
    DiscriminatorModel() = default;
    DiscriminatorConfig config_;
    std::size_t out_channels_ = 0;
    ParamTable params_;
};

} // namespace csg0
