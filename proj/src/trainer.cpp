#include "csg0/trainer.hpp"

#include "csg0/checkpoint.hpp"
#include "csg0/errors.hpp"
#include "csg0/losses.hpp"
#include "csg0/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace csg0 {

namespace {

// Stream tags keep the generator, discriminator and batch draws independent.
constexpr std::uint64_t kGenTag = 0x47454e;
constexpr std::uint64_t kDiscTag = 0x444953;
constexpr std::uint64_t kBatchTag = 0x424154;
constexpr std::uint64_t kMixTag = 0x4d4958;

Tensor stack_images(std::span<const Scene> data, const std::vector<std::size_t>& idx) {
    const Shape one = data[idx[0]].image.shape();
    std::vector<double> v;
    v.reserve(idx.size() * shape_numel(one));
    for (std::size_t i : idx) {
        const auto d = data[i].image.data();
        v.insert(v.end(), d.begin(), d.end());
    }
    return Tensor::from_data({idx.size(), one[1], one[2], one[3]}, std::move(v));
}

std::string hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << v;
    return ss.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    for (const auto& [name, t] : params_) {
        m_.emplace_back(t.numel(), 0.0);
        v_.emplace_back(t.numel(), 0.0);
    }
}

bool Adam::tracks(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.first == name; });
}

void Adam::zero_grad() {
    for (auto& [name, t] : params_) {
        t.zero_grad();
    }
}

void Adam::step() {
    // Check everything first so a bad gradient leaves all parameters untouched.
    for (const auto& [name, t] : params_) {
        if (!t.has_grad()) {
            continue;
        }
        for (double g : t.grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter '" + name + "'");
            }
        }
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& t = params_[k].second;
        if (!t.has_grad()) {
            continue; // zero gradient: moments decay, and with beta1 = 0 the step is 0
        }
        const auto g = t.grad();
        auto p = t.data();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training

TrainOptions options_from_task(const TaskConfig& task, const DiscriminatorConfig& d) {
    TrainOptions o;
    o.iterations = task.iterations;
    o.batch_size = task.batch_size;
    o.lr = task.lr;
    o.seed = task.seed;
    o.subset_size = task.subset_size;
    o.discriminator = d;
    return o;
}

Tensor sample_noise(std::size_t n, std::size_t z_dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n * z_dim);
    for (auto& x : v) {
        x = rng.normal();
    }
    return Tensor::from_data({n, z_dim}, std::move(v));
}

Tensor generate(const GeneratorModel& model, const Tensor& z, std::span<const SemanticMap> maps,
                std::string_view domain) {
    NoGradGuard guard;
    return model.forward(z, maps, domain).detach();
}

std::vector<IterLog> train_loop(GeneratorModel& model, std::size_t step, std::span<const Scene> dataset,
                                const TrainOptions& options) {
    if (dataset.empty()) {
        throw ValidationError("training dataset is empty");
    }
    if (options.subset_size) {
        if (*options.subset_size == 0 || *options.subset_size > dataset.size()) {
            throw ValidationError("subset_size " + std::to_string(*options.subset_size) + " exceeds dataset size " +
                                  std::to_string(dataset.size()));
        }
        dataset = dataset.first(*options.subset_size);
    }
    if (options.batch_size == 0) {
        throw ValidationError("batch_size must be positive");
    }
    const auto& registry = model.registry();
    const std::string domain = registry.step(step).domain;
    const std::size_t classes = registry.class_count(step);
    std::vector<SemanticMap> all_maps;
    for (const auto& s : dataset) {
        validate_map(s.mask, registry, domain);
        all_maps.push_back(s.mask);
    }
    const auto alpha = class_frequencies(all_maps, classes);

    DiscriminatorModel disc(options.discriminator, classes + 1, hash_combine(options.seed, kDiscTag + step));
    std::vector<std::pair<std::string, Tensor>> d_params;
    for (const auto& [name, t] : disc.params()) {
        d_params.emplace_back(name, t);
    }
    disc.set_trainable(true);
    std::vector<std::pair<std::string, Tensor>> g_params;
    for (const auto& p : model.parameters()) {
        if (p.trainable) {
            g_params.emplace_back(p.name, p.tensor);
        }
    }
    std::sort(g_params.begin(), g_params.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Adam opt_d(d_params, {options.lr, 0.0, 0.999, 1e-8});
    Adam opt_g(g_params, {options.lr, 0.0, 0.999, 1e-8});
    const auto d_fn = [&disc](const Tensor& x) { return disc.forward(x); };

    std::vector<IterLog> logs;
    logs.reserve(options.iterations);
    for (std::size_t iter = 1; iter <= options.iterations; ++iter) {
        Rng rng(hash_combine(hash_combine(options.seed, kBatchTag + step), iter));
        std::vector<std::size_t> idx(options.batch_size);
        for (auto& i : idx) {
            i = rng.below(dataset.size());
        }
        std::vector<SemanticMap> maps;
        std::vector<LabelMixMask> mix;
        for (std::size_t b = 0; b < idx.size(); ++b) {
            maps.push_back(dataset[idx[b]].mask);
            mix.push_back(sample_labelmix_mask(maps.back(), hash_combine(hash_combine(options.seed, kMixTag), iter * 1024 + b)));
        }
        const Tensor real = stack_images(dataset, idx);
        const Tensor z = sample_noise(idx.size(), model.config().z_dim, rng.next());
        const Tensor onehot = encode_onehot(maps, classes);
        const Tensor mask = stack_masks(mix);

        IterLog rec;
        rec.iter = iter;
        {
            const Tensor fake = generate(model, z, maps, domain);
            opt_d.zero_grad();
            const Tensor loss_d = discriminator_loss(disc.forward(real), disc.forward(fake), onehot, alpha);
            const Tensor loss_lm = labelmix_consistency(d_fn, real, fake, mask);
            backward(add(loss_d, scale(loss_lm, kLabelMixWeight)));
            opt_d.step();
            rec.loss_d = loss_d.item();
            rec.loss_lm = loss_lm.item();
        }
        {
            disc.set_trainable(false);
            opt_g.zero_grad();
            const Tensor fake = model.forward(z, maps, domain);
            const Tensor loss_g = generator_loss(disc.forward(fake), onehot, alpha);
            backward(loss_g);
            opt_g.step();
            disc.set_trainable(true);
            rec.loss_g = loss_g.item();
        }
        logs.push_back(rec);
        if (options.log) {
            *options.log << Json{{"iter", rec.iter}, {"loss_g", rec.loss_g}, {"loss_d", rec.loss_d}, {"loss_lm", rec.loss_lm}}.dump()
                         << '\n';
        }
        if (options.hook && options.hook_every > 0 && iter % options.hook_every == 0) {
            options.hook(iter, model);
        }
    }
    return logs;
}

GeneratorModel pretrain(const GeneratorConfig& config, const LabelRegistry& registry,
                        std::span<const Scene> dataset, const TrainOptions& options) {
    if (dataset.empty()) {
        throw ValidationError("pretrain: dataset is empty");
    }
    GeneratorModel model(config, registry, hash_combine(options.seed, kGenTag));
    train_loop(model, 0, dataset, options);
    return model;
}

void continue_domain(GeneratorModel& model, std::size_t step, std::span<const Scene> dataset,
                     const TrainOptions& options) {
    if (step != model.trained_steps()) {
        throw ValidationError("continue: checkpoint is trained through step " + std::to_string(model.trained_steps() - 1) +
                              ", next step must be " + std::to_string(model.trained_steps()) + ", got " +
                              std::to_string(step));
    }
    if (dataset.empty()) {
        throw ValidationError("continue: dataset is empty");
    }
    model.init_continual(step);
    train_loop(model, step, dataset, options);
}

LabelRegistry flattened_registry(const LabelRegistry& registry, std::size_t step) {
    const std::string domain = registry.step(step).domain;
    const std::size_t classes = registry.class_count(step);
    std::vector<std::string> names(classes);
    for (const auto& d : registry.defs()) {
        const auto id = static_cast<std::size_t>(d.cont_id);
        if (id < classes && names[id].empty()) {
            names[id] = d.name;
        }
    }
    std::string csv = "domain,name,orig_id,cont_id\n";
    for (std::size_t id = 0; id < classes; ++id) {
        csv += domain + "," + names[id] + "," + std::to_string(id) + "," + std::to_string(id) + "\n";
    }
    return LabelRegistry::from_csv(csv);
}

GeneratorModel train_scratch(const GeneratorConfig& config, const LabelRegistry& registry, std::size_t step,
                             std::span<const Scene> dataset, const TrainOptions& options) {
    return pretrain(config, flattened_registry(registry, step), dataset, options);
}

// ---------------------------------------------------------------------------
// Accounting and verification

ParamCount count_params(const GeneratorModel& model, std::size_t step) {
    if (step >= model.trained_steps()) {
        throw LookupError("model has no step " + std::to_string(step));
    }
    ParamCount c;
    c.new_params = model.delta_size(step);
    c.total_params = model.base_size();
    for (std::size_t k = 1; k <= step; ++k) {
        c.total_params += model.delta_size(k);
    }
    return c;
}

std::vector<Probe> make_probes(const GeneratorModel& model, std::size_t n, std::uint64_t seed) {
    const auto& reg = model.registry();
    const auto& cfg = model.config();
    constexpr std::size_t kBlock = 4;
    std::vector<Probe> probes;
    for (std::size_t k = 0; k < n; ++k) {
        Rng rng(hash_combine(seed, k));
        const std::size_t step = rng.below(model.trained_steps());
        Probe p;
        p.domain = reg.step(step).domain;
        std::vector<int> ids;
        for (int id : reg.sampleable_ids(p.domain)) {
            if (reg.step_introduced(id) <= step) {
                ids.push_back(id);
            }
        }
        if (ids.empty()) {
            throw ValidationError("domain '" + p.domain + "' has no sampleable classes");
        }
        p.map = SemanticMap(cfg.height, cfg.width);
        for (std::size_t bi = 0; bi < cfg.height; bi += kBlock) {
            for (std::size_t bj = 0; bj < cfg.width; bj += kBlock) {
                const int id = ids[rng.below(ids.size())];
                for (std::size_t i = bi; i < std::min(cfg.height, bi + kBlock); ++i) {
                    for (std::size_t j = bj; j < std::min(cfg.width, bj + kBlock); ++j) {
                        p.map.at(i, j) = id;
                    }
                }
            }
        }
        p.z = sample_noise(1, cfg.z_dim, rng.next());
        probes.push_back(std::move(p));
    }
    return probes;
}

VerifyReport verify_zero_forgetting(std::string_view before, std::string_view after, std::span<const Probe> probes) {
    const auto sec_before = read_sections(before);
    const auto sec_after = read_sections(after);
    VerifyReport report;
    for (const auto& s : sec_before) {
        const auto it = std::find_if(sec_after.begin(), sec_after.end(), [&](const Section& o) { return o.name == s.name; });
        if (it == sec_after.end()) {
            report.digest_mismatches.push_back(s.name + ": missing after");
        } else if (it->digest != s.digest) {
            report.digest_mismatches.push_back(s.name + ": " + hex(s.digest) + " != " + hex(it->digest));
        }
    }
    const auto model_before = decode_checkpoint(before);
    const auto model_after = decode_checkpoint(after);
    for (const auto& p : probes) {
        try {
            model_before.domain_step(p.domain);
            model_after.domain_step(p.domain);
        } catch (const LookupError& e) {
            throw ValidationError(std::string("probe: ") + e.what());
        }
        const std::vector<SemanticMap> maps{p.map};
        const Tensor a = generate(model_before, p.z, maps, p.domain);
        const Tensor b = generate(model_after, p.z, maps, p.domain);
        double diff = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) {
            diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
        }
        report.probe_diffs.push_back(diff);
    }
    report.pass = report.digest_mismatches.empty() &&
                  std::all_of(report.probe_diffs.begin(), report.probe_diffs.end(), [](double d) { return d == 0.0; });
    return report;
}

} // namespace csg0
