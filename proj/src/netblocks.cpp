#include "csg0/netblocks.hpp"

#include "csg0/errors.hpp"
#include "csg0/rng.hpp"

#include <algorithm>
#include <cmath>

namespace csg0 {

namespace {

using detail::Node;

std::uint64_t name_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return h;
}

// Gaussian weights scaled by gain / sqrt(fan_in); each tensor draws from
// its own stream keyed by name, so creation order never matters.
Tensor random_conv_weight(std::uint64_t seed, const std::string& name, std::size_t cout, std::size_t cin,
                          std::size_t k, double gain) {
    Rng rng(hash_combine(seed, name_hash(name)));
    const double s = gain / std::sqrt(static_cast<double>(cin * k * k));
    std::vector<double> v(cout * cin * k * k);
    for (auto& x : v) {
        x = s * rng.normal();
    }
    return Tensor::from_data({cout, cin, k, k}, std::move(v));
}

void add_conv(ParamTable& t, std::uint64_t seed, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t k, double gain, bool bias = true) {
    t[name + ".w"] = random_conv_weight(seed, name + ".w", cout, cin, k, gain);
    if (bias) {
        t[name + ".b"] = Tensor::zeros({cout});
    }
}

std::string block_name(std::size_t i) { return "blk" + std::to_string(i); }

std::string norm_name(std::size_t i, std::size_t j) { return block_name(i) + ".norm" + std::to_string(j); }

std::string conv_name(std::size_t i, std::size_t j) { return block_name(i) + ".conv" + std::to_string(j); }

// Feature widths (F) of the two cSPADEs in block i.
std::size_t norm_width(const GeneratorConfig& c, std::size_t i, std::size_t j) {
    return j == 0 ? c.channels[i] : c.block_mid(i);
}

ParamTable clone_table(const ParamTable& t) {
    ParamTable out;
    for (const auto& [name, tensor] : t) {
        out.emplace(name, tensor.clone());
    }
    return out;
}

std::size_t table_size(const ParamTable& t) {
    std::size_t n = 0;
    for (const auto& [name, tensor] : t) {
        n += tensor.numel();
    }
    return n;
}

Tensor replicate_noise(const Tensor& z, std::size_t h, std::size_t w) {
    const std::size_t batch = z.dim(0);
    const std::size_t dim = z.dim(1);
    const auto zs = z.data();
    std::vector<double> v(batch * dim * h * w);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < dim; ++c) {
            std::fill_n(v.begin() + static_cast<std::ptrdiff_t>((n * dim + c) * h * w), h * w, zs[n * dim + c]);
        }
    }
    return Tensor::from_data({batch, dim, h, w}, std::move(v));
}

} // namespace

// ---------------------------------------------------------------------------
// Weight modulation

WeightStats weight_stats(const Tensor& weight, double std_floor) {
    if (weight.ndim() != 4) {
        throw DimensionError("weight_stats expects [Cout,Cin,K,K], got " + shape_str(weight.shape()));
    }
    const std::size_t cout = weight.dim(0);
    const std::size_t cin = weight.dim(1);
    const std::size_t taps = weight.dim(2) * weight.dim(3);
    const auto w = weight.data();
    std::vector<double> m(cout * cin);
    std::vector<double> s(cout * cin);
    for (std::size_t k = 0; k < cout * cin; ++k) {
        double mu = 0.0;
        for (std::size_t t = 0; t < taps; ++t) {
            mu += w[k * taps + t];
        }
        mu /= static_cast<double>(taps);
        double var = 0.0;
        for (std::size_t t = 0; t < taps; ++t) {
            const double d = w[k * taps + t] - mu;
            var += d * d;
        }
        m[k] = mu;
        s[k] = std::max(std::sqrt(var / static_cast<double>(taps)), std_floor);
    }
    return {Tensor::from_data({cout, cin}, std::move(m)), Tensor::from_data({cout, cin}, std::move(s))};
}

Tensor modulate_weight(const Tensor& weight, const WeightStats& stats, const Tensor& alpha, const Tensor& beta) {
    const std::size_t cout = weight.dim(0);
    const std::size_t cin = weight.dim(1);
    const Shape pair_shape{cout, cin};
    if (stats.mean.shape() != pair_shape || stats.std.shape() != pair_shape || alpha.shape() != pair_shape ||
        beta.shape() != pair_shape) {
        throw DimensionError("modulate_weight: modulation parameters must be " + shape_str(pair_shape) +
                             ", got alpha " + shape_str(alpha.shape()) + " beta " + shape_str(beta.shape()));
    }
    const std::size_t taps = weight.dim(2) * weight.dim(3);
    const auto w = weight.data();
    const auto m = stats.mean.data();
    const auto s = stats.std.data();
    const auto a = alpha.data();
    const auto b = beta.data();
    auto standardized = std::make_shared<std::vector<double>>(w.size());
    std::vector<double> out(w.size());
    for (std::size_t k = 0; k < cout * cin; ++k) {
        // At alpha = S, beta = M the kernel is passed through untouched, so the
        // identity record reproduces W bit for bit.
        const bool identity = a[k] == s[k] && b[k] == m[k];
        for (std::size_t t = 0; t < taps; ++t) {
            const std::size_t i = k * taps + t;
            const double zval = (w[i] - m[k]) / s[k];
            (*standardized)[i] = zval;
            out[i] = identity ? w[i] : a[k] * zval + b[k];
        }
    }
    auto node = std::make_shared<Node>();
    node->shape = weight.shape();
    node->value = std::move(out);
    Tensor result(node);
    if (grad_enabled() && (alpha.requires_grad() || beta.requires_grad())) {
        node->requires_grad = true;
        node->inputs = {alpha.node(), beta.node()};
        node->backward = [standardized, taps](Node& self) {
            auto& ga = self.inputs[0];
            auto& gb = self.inputs[1];
            const std::size_t pairs = self.value.size() / taps;
            for (std::size_t k = 0; k < pairs; ++k) {
                double sa = 0.0;
                double sb = 0.0;
                for (std::size_t t = 0; t < taps; ++t) {
                    sa += self.grad[k * taps + t] * (*standardized)[k * taps + t];
                    sb += self.grad[k * taps + t];
                }
                if (ga->requires_grad) {
                    ga->ensure_grad()[k] += sa;
                }
                if (gb->requires_grad) {
                    gb->ensure_grad()[k] += sb;
                }
            }
        };
    }
    return result;
}

ModulatedConv::ModulatedConv(Tensor weight, Tensor bias, double std_floor)
    : weight_(std::move(weight)), bias_(std::move(bias)), stats_(weight_stats(weight_, std_floor)) {}

ModulatedConv::Record ModulatedConv::identity_record() const {
    return {stats_.std.clone(), stats_.mean.clone(), Tensor::zeros({weight_.dim(0)})};
}

void ModulatedConv::set_record(std::size_t domain_step, Record record) {
    if (record.alpha.shape() != stats_.mean.shape() || record.beta.shape() != stats_.mean.shape() ||
        record.b_conv.shape() != Shape{weight_.dim(0)}) {
        throw DimensionError("modulation record does not match conv " + shape_str(weight_.shape()));
    }
    records_[domain_step] = std::move(record);
}

const ModulatedConv::Record& ModulatedConv::record(std::size_t domain_step) const {
    const auto it = records_.find(domain_step);
    if (it == records_.end()) {
        throw LookupError("no modulation record for step " + std::to_string(domain_step));
    }
    return it->second;
}

std::pair<Tensor, Tensor> ModulatedConv::modulate(std::size_t domain_step) const {
    const auto& r = record(domain_step);
    return {modulate_weight(weight_, stats_, r.alpha, r.beta), add(bias_, r.b_conv)};
}

// ---------------------------------------------------------------------------
// cSPADE

Tensor CSpadeBlock::first_conv(const std::vector<LabelGroup>& groups, const Tensor& noise) const {
    if (groups.empty()) {
        throw ConfigError("cSPADE needs at least the base label group");
    }
    const std::size_t pad = shared_w.dim(2) / 2;
    Tensor h = conv2d(concat_channels({groups[0].onehot, noise}), shared_w, shared_b, pad);
    if (!groups[0].all) {
        h = mask_mul(h, groups[0].mask);
    }
    for (std::size_t g = 1; g < groups.size(); ++g) {
        if (!groups[g].any) {
            continue;
        }
        if (g > el.size()) {
            throw ConfigError("label group " + std::to_string(g) + " has no EL conv");
        }
        const auto& [w, b] = el[g - 1];
        h = add(h, mask_mul(conv2d(groups[g].onehot, w, b, pad), groups[g].mask));
    }
    return h;
}

Tensor CSpadeBlock::forward(const Tensor& features, const std::vector<LabelGroup>& groups,
                            const Tensor& noise) const {
    const Tensor normalized = instance_norm(features, affine_gamma, affine_beta, eps);
    const Tensor actv = relu(first_conv(groups, noise));
    const std::size_t pad = scale_w.dim(2) / 2;
    const Tensor gain = conv2d(actv, scale_w, scale_b, pad);
    const Tensor shift = conv2d(actv, shift_w, shift_b, pad);
    return add(add(normalized, hadamard(normalized, gain)), shift);
}

std::vector<LabelGroup> groups_from_split(const OneHotSplit& split) {
    const auto old_mask = split.new_mask.clone();
    bool any_new = false;
    bool all_new = true;
    for (auto& v : old_mask.node()->value) {
        any_new = any_new || v != 0.0;
        all_new = all_new && v != 0.0;
        v = 1.0 - v;
    }
    LabelGroup base{split.old_classes, old_mask, !all_new, !any_new};
    LabelGroup fresh{split.new_classes, split.new_mask, any_new, all_new};
    return {base, fresh};
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
    if (blocks == 0 || channels.size() != blocks) {
        throw ConfigError("generator: channels must list one width per block");
    }
    if (kernel % 2 == 0) {
        throw ConfigError("generator: kernel size must be odd");
    }
    const std::size_t f = std::size_t{1} << (blocks - 1);
    if (height % f != 0 || width % f != 0 || height / f == 0 || width / f == 0) {
        throw ConfigError("generator: image size must be divisible by 2^(blocks-1)");
    }
    if (hidden == 0 || z_dim == 0 || std::any_of(channels.begin(), channels.end(), [](auto c) { return c == 0; })) {
        throw ConfigError("generator: widths must be positive");
    }
    if (!(norm_eps > 0.0) || !(std_floor > 0.0)) {
        throw ConfigError("generator: eps values must be positive");
    }
}

std::vector<std::string> modulated_conv_names(const GeneratorConfig& config) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < config.blocks; ++i) {
        names.push_back(conv_name(i, 0));
        names.push_back(conv_name(i, 1));
    }
    return names;
}

std::size_t continual_param_count(const GeneratorConfig& c, const LabelRegistry& registry, std::size_t step) {
    const std::size_t k2 = c.kernel * c.kernel;
    std::size_t n = 0;
    for (std::size_t i = 0; i < c.blocks; ++i) {
        const std::size_t fin = c.channels[i];
        const std::size_t mid = c.block_mid(i);
        const std::size_t fout = c.block_out(i);
        n += 2 * mid * fin + mid;   // conv0
        n += 2 * fout * mid + fout; // conv1
        for (std::size_t j = 0; j < 2; ++j) {
            for (std::size_t g = 1; g <= step; ++g) {
                n += c.hidden * registry.step(g).new_count * k2 + c.hidden;
            }
            n += 2 * norm_width(c, i, j);
        }
    }
    return n;
}

GeneratorModel::GeneratorModel(GeneratorConfig config, LabelRegistry registry, std::uint64_t seed)
    : config_(std::move(config)), registry_(std::move(registry)) {
    config_.validate();
    if (registry_.num_steps() == 0) {
        throw ValidationError("generator needs a registry with at least one domain");
    }
    const auto& c = config_;
    const std::size_t k = c.kernel;
    const std::size_t base_classes = registry_.step(0).new_count;
    const double relu_gain = std::sqrt(2.0);
    add_conv(base_, seed, "init", c.channels[0], c.z_dim, k, 1.0);
    for (std::size_t i = 0; i < c.blocks; ++i) {
        const std::size_t fin = c.channels[i];
        const std::size_t mid = c.block_mid(i);
        const std::size_t fout = c.block_out(i);
        for (std::size_t j = 0; j < 2; ++j) {
            const std::string n = norm_name(i, j);
            const std::size_t f = norm_width(c, i, j);
            add_conv(base_, seed, n + ".shared", c.hidden, base_classes + c.z_dim, k, relu_gain);
            add_conv(base_, seed, n + ".scale", f, c.hidden, k, 0.5);
            add_conv(base_, seed, n + ".shift", f, c.hidden, k, 0.5);
            base_[n + ".affine.gamma"] = Tensor::full({f}, 1.0);
            base_[n + ".affine.beta"] = Tensor::zeros({f});
        }
        add_conv(base_, seed, conv_name(i, 0), mid, fin, k, relu_gain);
        add_conv(base_, seed, conv_name(i, 1), fout, mid, k, relu_gain);
        if (fin != fout) {
            add_conv(base_, seed, block_name(i) + ".shortcut", fout, fin, 1, 1.0, false);
        }
    }
    add_conv(base_, seed, "out", 3, c.channels.back(), k, 1.0);
    apply_trainable_flags();
}

GeneratorModel GeneratorModel::from_parts(GeneratorConfig config, LabelRegistry registry, ParamTable base,
                                          std::vector<DomainDelta> deltas) {
    // Shapes are checked against a template grown through the same steps.
    GeneratorModel tmpl(config, registry, 0);
    auto same_layout = [](const ParamTable& want, const ParamTable& got, const std::string& what) {
        if (want.size() != got.size()) {
            throw ValidationError(what + ": expected " + std::to_string(want.size()) + " tensors, found " +
                                  std::to_string(got.size()));
        }
        for (const auto& [name, tensor] : want) {
            const auto it = got.find(name);
            if (it == got.end()) {
                throw ValidationError(what + ": missing tensor '" + name + "'");
            }
            if (it->second.shape() != tensor.shape()) {
                throw ValidationError(what + ": tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                                      ", expected " + shape_str(tensor.shape()));
            }
        }
    };
    same_layout(tmpl.base_, base, "BASE section");
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        const std::size_t step = k + 1;
        if (deltas[k].step != step || step >= registry.num_steps() ||
            deltas[k].domain != registry.step(step).domain) {
            throw ValidationError("delta section " + std::to_string(step) + " does not match the registry stream");
        }
        tmpl.init_continual(step);
        same_layout(tmpl.deltas_.back().params, deltas[k].params, "delta section " + std::to_string(step));
    }
    GeneratorModel model;
    model.config_ = std::move(config);
    model.registry_ = std::move(registry);
    model.base_ = std::move(base);
    model.deltas_ = std::move(deltas);
    for (auto& [name, t] : model.base_) {
        t = t.detach();
    }
    for (auto& d : model.deltas_) {
        for (auto& [name, t] : d.params) {
            t = t.detach();
        }
    }
    model.build_modulated();
    model.apply_trainable_flags();
    return model;
}

GeneratorModel GeneratorModel::clone() const {
    GeneratorModel model;
    model.config_ = config_;
    model.registry_ = registry_;
    model.base_ = clone_table(base_);
    for (const auto& d : deltas_) {
        model.deltas_.push_back({d.domain, d.step, clone_table(d.params)});
    }
    model.build_modulated();
    model.apply_trainable_flags();
    return model;
}

std::size_t GeneratorModel::domain_step(std::string_view domain) const {
    const std::size_t step = registry_.step_of(domain);
    if (step >= trained_steps()) {
        throw LookupError("domain '" + std::string(domain) + "' (step " + std::to_string(step) +
                          ") has not been trained in this model");
    }
    return step;
}

void GeneratorModel::build_modulated() {
    modulated_.clear();
    if (deltas_.empty()) {
        return;
    }
    for (const auto& name : modulated_conv_names(config_)) {
        ModulatedConv mc(base_.at(name + ".w"), base_.at(name + ".b"), config_.std_floor);
        for (const auto& d : deltas_) {
            mc.set_record(d.step, {d.params.at(name + ".alpha"), d.params.at(name + ".beta"),
                                   d.params.at(name + ".bconv")});
        }
        modulated_.emplace(name, std::move(mc));
    }
}

void GeneratorModel::apply_trainable_flags() {
    for (auto& p : parameters()) {
        p.tensor.set_requires_grad(p.trainable);
    }
}

void GeneratorModel::init_continual(std::size_t step) {
    if (step != trained_steps()) {
        throw ValidationError("init_continual: model is trained through step " + std::to_string(trained_steps() - 1) +
                              ", cannot initialize step " + std::to_string(step));
    }
    if (step >= registry_.num_steps()) {
        throw ValidationError("init_continual: registry has no step " + std::to_string(step));
    }
    const auto& c = config_;
    const std::size_t prev = step - 1;
    // Stats come from the BASE weights, which are frozen from here on.
    if (modulated_.empty()) {
        for (const auto& name : modulated_conv_names(c)) {
            modulated_.emplace(name, ModulatedConv(base_.at(name + ".w"), base_.at(name + ".b"), c.std_floor));
        }
    }
    DomainDelta delta{registry_.step(step).domain, step, {}};
    auto& t = delta.params;
    for (std::size_t i = 0; i < c.blocks; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const std::string n = norm_name(i, j);
            for (std::size_t g = 1; g <= step; ++g) {
                const std::string el = n + ".el" + std::to_string(g);
                if (g < step) {
                    t[el + ".w"] = lookup(prev, el + ".w").clone();
                    t[el + ".b"] = lookup(prev, el + ".b").clone();
                } else {
                    t[el + ".w"] = Tensor::zeros({c.hidden, registry_.step(g).new_count, c.kernel, c.kernel});
                    t[el + ".b"] = Tensor::zeros({c.hidden});
                }
            }
            t[n + ".affine.gamma"] = lookup(prev, n + ".affine.gamma").clone();
            t[n + ".affine.beta"] = lookup(prev, n + ".affine.beta").clone();
        }
    }
    for (const auto& name : modulated_conv_names(c)) {
        const auto& mc = modulated_.at(name);
        const auto rec = prev == 0 ? mc.identity_record() : mc.record(prev);
        t[name + ".alpha"] = rec.alpha.clone();
        t[name + ".beta"] = rec.beta.clone();
        t[name + ".bconv"] = rec.b_conv.clone();
    }
    for (auto& [name, tensor] : t) {
        tensor = tensor.detach();
    }
    deltas_.push_back(std::move(delta));
    build_modulated();
    apply_trainable_flags();
}

std::vector<Parameter> GeneratorModel::parameters() const {
    std::vector<Parameter> out;
    const bool base_trainable = deltas_.empty();
    for (const auto& [name, t] : base_) {
        out.push_back({"base/" + name, t, base_trainable, std::nullopt});
    }
    for (const auto& d : deltas_) {
        const bool trainable = d.step + 1 == trained_steps();
        for (const auto& [name, t] : d.params) {
            out.push_back({"delta" + std::to_string(d.step) + "/" + name, t, trainable, d.step});
        }
    }
    return out;
}

std::vector<Tensor> GeneratorModel::trainable_tensors() const {
    std::vector<Tensor> out;
    for (const auto& p : parameters()) {
        if (p.trainable) {
            out.push_back(p.tensor);
        }
    }
    return out;
}

std::size_t GeneratorModel::base_size() const { return table_size(base_); }

std::size_t GeneratorModel::delta_size(std::size_t step) const {
    if (step == 0) {
        return base_size();
    }
    if (step > deltas_.size()) {
        throw LookupError("no delta for step " + std::to_string(step));
    }
    return table_size(deltas_[step - 1].params);
}

const Tensor& GeneratorModel::lookup(std::size_t step, const std::string& name) const {
    if (step > 0) {
        const auto& params = deltas_.at(step - 1).params;
        if (const auto it = params.find(name); it != params.end()) {
            return it->second;
        }
    }
    const auto it = base_.find(name);
    if (it == base_.end()) {
        throw LookupError("generator parameter '" + name + "' not found for step " + std::to_string(step));
    }
    return it->second;
}

CSpadeBlock GeneratorModel::cspade_block(std::size_t block, std::size_t index, std::size_t step) const {
    const std::string n = norm_name(block, index);
    CSpadeBlock b;
    b.shared_w = lookup(step, n + ".shared.w");
    b.shared_b = lookup(step, n + ".shared.b");
    for (std::size_t g = 1; g <= step; ++g) {
        const std::string el = n + ".el" + std::to_string(g);
        b.el.emplace_back(lookup(step, el + ".w"), lookup(step, el + ".b"));
    }
    b.scale_w = lookup(step, n + ".scale.w");
    b.scale_b = lookup(step, n + ".scale.b");
    b.shift_w = lookup(step, n + ".shift.w");
    b.shift_b = lookup(step, n + ".shift.b");
    b.affine_gamma = lookup(step, n + ".affine.gamma");
    b.affine_beta = lookup(step, n + ".affine.beta");
    b.eps = config_.norm_eps;
    return b;
}

Tensor GeneratorModel::modulated_conv(const std::string& prefix, const Tensor& x, std::size_t step) const {
    const std::size_t pad = config_.kernel / 2;
    if (step == 0) {
        return conv2d(x, base_.at(prefix + ".w"), base_.at(prefix + ".b"), pad);
    }
    const auto [w, b] = modulated_.at(prefix).modulate(step);
    return conv2d(x, w, b, pad);
}

Tensor GeneratorModel::forward(const Tensor& z, std::span<const SemanticMap> maps, std::string_view domain) const {
    const std::size_t step = domain_step(domain);
    const auto& c = config_;
    if (z.ndim() != 2 || z.dim(1) != c.z_dim || z.dim(0) != maps.size() || maps.empty()) {
        throw DimensionError("generator: noise " + shape_str(z.shape()) + " does not match " +
                             std::to_string(maps.size()) + " maps and z_dim " + std::to_string(c.z_dim));
    }
    for (const auto& m : maps) {
        if (m.height != c.height || m.width != c.width) {
            throw DimensionError("generator: label map is " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                                 ", expected " + std::to_string(c.height) + "x" + std::to_string(c.width));
        }
    }
    const std::size_t pad = c.kernel / 2;
    Tensor x = conv2d(replicate_noise(z, c.res_height(0), c.res_width(0)), base_.at("init.w"), base_.at("init.b"), pad);
    for (std::size_t i = 0; i < c.blocks; ++i) {
        const std::size_t h = c.res_height(i);
        const std::size_t w = c.res_width(i);
        const auto groups = encode_groups(maps, registry_, step, h, w);
        const Tensor noise = replicate_noise(z, h, w);
        const Tensor skip = c.channels[i] == c.block_out(i)
                                ? x
                                : conv2d(x, base_.at(block_name(i) + ".shortcut.w"), Tensor(), 0);
        Tensor dx = cspade_block(i, 0, step).forward(x, groups, noise);
        dx = modulated_conv(conv_name(i, 0), leaky_relu(dx, c.slope), step);
        dx = cspade_block(i, 1, step).forward(dx, groups, noise);
        dx = modulated_conv(conv_name(i, 1), leaky_relu(dx, c.slope), step);
        x = add(skip, dx);
        if (i + 1 < c.blocks) {
            x = upsample_nearest(x, 2);
        }
    }
    return tanh(conv2d(leaky_relu(x, c.slope), base_.at("out.w"), base_.at("out.b"), pad));
}

// ---------------------------------------------------------------------------
// Discriminator

DiscriminatorModel::DiscriminatorModel(DiscriminatorConfig config, std::size_t out_channels, std::uint64_t seed)
    : config_(std::move(config)), out_channels_(out_channels) {
    const auto& ch = config_.channels;
    if (ch.empty() || out_channels == 0) {
        throw ConfigError("discriminator: needs at least one level and one output channel");
    }
    const double gain = std::sqrt(2.0);
    add_conv(params_, seed, "enc0", ch[0], 3, 3, gain);
    for (std::size_t l = 1; l < ch.size(); ++l) {
        add_conv(params_, seed, "enc" + std::to_string(l), ch[l], ch[l - 1], 3, gain);
    }
    for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
        add_conv(params_, seed, "dec" + std::to_string(l), ch[l], ch[l + 1] + ch[l], 3, gain);
    }
    add_conv(params_, seed, "head", out_channels, ch[0], 1, 1.0);
}

DiscriminatorModel DiscriminatorModel::from_params(DiscriminatorConfig config, std::size_t out_channels,
                                                   ParamTable params) {
    DiscriminatorModel tmpl(config, out_channels, 0);
    if (tmpl.params_.size() != params.size()) {
        throw ValidationError("discriminator parameters do not match the configuration");
    }
    for (const auto& [name, t] : tmpl.params_) {
        const auto it = params.find(name);
        if (it == params.end() || it->second.shape() != t.shape()) {
            throw ValidationError("discriminator parameter '" + name + "' missing or misshapen");
        }
    }
    DiscriminatorModel d;
    d.config_ = std::move(config);
    d.out_channels_ = out_channels;
    d.params_ = std::move(params);
    return d;
}

Tensor DiscriminatorModel::forward(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(1) != 3) {
        throw DimensionError("discriminator expects [N,3,H,W], got " + shape_str(x.shape()));
    }
    const std::size_t levels = config_.channels.size();
    const std::size_t f = std::size_t{1} << (levels - 1);
    if (x.dim(2) % f != 0 || x.dim(3) % f != 0) {
        throw DimensionError("discriminator: spatial size " + shape_str(x.shape()) + " not divisible by " +
                             std::to_string(f));
    }
    auto conv = [&](const Tensor& in, const std::string& name, std::size_t pad) {
        return conv2d(in, params_.at(name + ".w"), params_.at(name + ".b"), pad);
    };
    std::vector<Tensor> skips;
    Tensor cur = leaky_relu(conv(x, "enc0", 1), config_.slope);
    skips.push_back(cur);
    for (std::size_t l = 1; l < levels; ++l) {
        cur = leaky_relu(conv(avg_pool2(cur), "enc" + std::to_string(l), 1), config_.slope);
        skips.push_back(cur);
    }
    for (std::size_t l = levels - 1; l-- > 0;) {
        cur = concat_channels({upsample_nearest(cur, 2), skips[l]});
        cur = leaky_relu(conv(cur, "dec" + std::to_string(l), 1), config_.slope);
    }
    return conv(cur, "head", 0);
}

std::vector<Tensor> DiscriminatorModel::tensors() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_) {
        out.push_back(t);
    }
    return out;
}

void DiscriminatorModel::set_trainable(bool on) {
    for (auto& [name, t] : params_) {
        t.set_requires_grad(on);
    }
}

} // namespace csg0
