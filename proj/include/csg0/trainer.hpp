#pragma once

#include "csg0/netblocks.hpp"
#include "csg0/run_config.hpp"
#include "csg0/toyscenes.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace csg0 {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over named tensors, updated in
/// the order given (callers pass lexicographic name order). Tensors without
/// a gradient buffer are treated as having a zero gradient.
class Adam {
  public:
    Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

    // Throws NumericError naming the first parameter with a non-finite gradient.
    void step();
    void zero_grad();
    std::size_t steps() const { return t_; }
    std::size_t size() const { return params_.size(); }
    bool tracks(const std::string& name) const;

  private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamConfig config_;
    std::size_t t_ = 0;
};

struct IterLog {
    std::size_t iter = 0;
    double loss_g = 0.0;
    double loss_d = 0.0;
    double loss_lm = 0.0;
};

struct TrainOptions {
    std::size_t iterations = 200;
    std::size_t batch_size = 1;
    double lr = 2e-4;
    std::uint64_t seed = 0;
    std::optional<std::size_t> subset_size;
    DiscriminatorConfig discriminator;
    std::ostream* log = nullptr; // JSONL sink, one record per iteration
    // Called after iteration `iter` (1-based) when iter % hook_every == 0.
    std::function<void(std::size_t iter, const GeneratorModel&)> hook;
    std::size_t hook_every = 0;
};

TrainOptions options_from_task(const TaskConfig& task, const DiscriminatorConfig& d);

/// Vanilla training of a fresh generator on the first domain; every
/// generator parameter ends up in BASE.
GeneratorModel pretrain(const GeneratorConfig& config, const LabelRegistry& registry,
                        std::span<const Scene> dataset, const TrainOptions& options);

/// Adds the delta for `step` and trains only it, against a fresh discriminator.
void continue_domain(GeneratorModel& model, std::size_t step, std::span<const Scene> dataset,
                     const TrainOptions& options);

// Single-step registry holding every class known at `step`, owned by that
// step's domain: the label space of a model trained from scratch on it.
LabelRegistry flattened_registry(const LabelRegistry& registry, std::size_t step);

/// From-scratch baseline for `step`'s domain on the same budget.
GeneratorModel train_scratch(const GeneratorConfig& config, const LabelRegistry& registry, std::size_t step,
                             std::span<const Scene> dataset, const TrainOptions& options);

// Runs the alternating D/G loop on whatever the model currently marks trainable.
std::vector<IterLog> train_loop(GeneratorModel& model, std::size_t step, std::span<const Scene> dataset,
                                const TrainOptions& options);

struct ParamCount {
    std::size_t new_params = 0;
    std::size_t total_params = 0;
};

ParamCount count_params(const GeneratorModel& model, std::size_t step);

struct Probe {
    Tensor z; // [1, z_dim]
    SemanticMap map;
    std::string domain;
};

struct VerifyReport {
    std::vector<double> probe_diffs; // max |before - after| per probe
    std::vector<std::string> digest_mismatches;
    bool pass = false;
};

/// Compares generations of two checkpoints (raw bytes) on the probes and
/// the digests of every section present in `before`.
VerifyReport verify_zero_forgetting(std::string_view before, std::string_view after, std::span<const Probe> probes);

// Random blocky label maps drawn from the sampleable classes of trained domains.
std::vector<Probe> make_probes(const GeneratorModel& model, std::size_t n, std::uint64_t seed);

Tensor sample_noise(std::size_t n, std::size_t z_dim, std::uint64_t seed);

// Generation under no-grad.
Tensor generate(const GeneratorModel& model, const Tensor& z, std::span<const SemanticMap> maps,
                std::string_view domain);

} // namespace csg0
