#include "csg0/losses.hpp"

#include "csg0/errors.hpp"

#include <map>
#include <set>

namespace csg0 {

namespace {

// Constant per-pixel weights over the C+1 logit channels: alpha_c on the
// true-class channel of labelled pixels, nothing on the fake channel.
Tensor class_weight_map(const Tensor& logits, const Tensor& onehot, const std::vector<double>& alpha,
                        const char* what) {
    if (logits.ndim() != 4 || onehot.ndim() != 4) {
        throw DimensionError(std::string(what) + ": expected NCHW logits and one-hot");
    }
    const std::size_t batch = onehot.dim(0);
    const std::size_t classes = onehot.dim(1);
    const std::size_t plane = onehot.dim(2) * onehot.dim(3);
    if (logits.dim(0) != batch || logits.dim(1) != classes + 1 || logits.dim(2) != onehot.dim(2) ||
        logits.dim(3) != onehot.dim(3)) {
        throw DimensionError(std::string(what) + ": logits " + shape_str(logits.shape()) +
                             " do not match one-hot " + shape_str(onehot.shape()) + " plus a fake channel");
    }
    if (alpha.size() != classes) {
        throw DimensionError(std::string(what) + ": " + std::to_string(alpha.size()) + " class weights for " +
                             std::to_string(classes) + " classes");
    }
    const auto s = onehot.data();
    std::vector<double> w(batch * (classes + 1) * plane, 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t p = 0; p < plane; ++p) {
                w[(n * (classes + 1) + c) * plane + p] = alpha[c] * s[(n * classes + c) * plane + p];
            }
        }
    }
    return Tensor::from_data(logits.shape(), std::move(w));
}

Tensor fake_channel_map(const Tensor& logits) {
    const std::size_t batch = logits.dim(0);
    const std::size_t channels = logits.dim(1);
    const std::size_t plane = logits.dim(2) * logits.dim(3);
    std::vector<double> w(logits.numel(), 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
        std::fill_n(w.begin() + static_cast<std::ptrdiff_t>((n * channels + channels - 1) * plane), plane, 1.0);
    }
    return Tensor::from_data(logits.shape(), std::move(w));
}

double inv_batch(const Tensor& t) { return -1.0 / static_cast<double>(t.dim(0)); }

} // namespace

Tensor generator_loss(const Tensor& d_logits_fake, const Tensor& onehot, const std::vector<double>& alpha) {
    const Tensor w = class_weight_map(d_logits_fake, onehot, alpha, "generator_loss");
    return scale(sum(hadamard(log_softmax_channels(d_logits_fake), w)), inv_batch(d_logits_fake));
}

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake, const Tensor& onehot,
                          const std::vector<double>& alpha) {
    if (d_real.shape() != d_fake.shape()) {
        throw DimensionError("discriminator_loss: real logits " + shape_str(d_real.shape()) + " vs fake " +
                             shape_str(d_fake.shape()));
    }
    const Tensor w = class_weight_map(d_real, onehot, alpha, "discriminator_loss");
    const Tensor real_term = sum(hadamard(log_softmax_channels(d_real), w));
    const Tensor fake_term = sum(hadamard(log_softmax_channels(d_fake), fake_channel_map(d_fake)));
    return scale(add(real_term, fake_term), inv_batch(d_real));
}

Tensor labelmix(const Tensor& x_real, const Tensor& x_fake, const Tensor& mask) {
    if (x_real.shape() != x_fake.shape()) {
        throw DimensionError("labelmix: " + shape_str(x_real.shape()) + " vs " + shape_str(x_fake.shape()));
    }
    // x_fake + M*(x_real - x_fake) rounds differently from the textbook
    // form, so both halves are masked explicitly.
    const auto inv = mask.clone();
    for (auto& v : inv.node()->value) {
        v = 1.0 - v;
    }
    return add(mask_mul(x_real, mask), mask_mul(x_fake, inv));
}

LabelMixMask sample_labelmix_mask(const SemanticMap& map, std::uint64_t seed) {
    const std::set<int> present(map.labels.begin(), map.labels.end());
    Rng rng(seed);
    std::map<int, double> bit;
    for (int id : present) {
        bit[id] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    std::vector<double> m(map.labels.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = bit[map.labels[i]];
    }
    return {Tensor::from_data({1, 1, map.height, map.width}, std::move(m)), seed};
}

Tensor stack_masks(const std::vector<LabelMixMask>& masks) {
    if (masks.empty()) {
        throw ValidationError("stack_masks: no masks");
    }
    const Shape one = masks.front().mask.shape();
    std::vector<double> v;
    for (const auto& m : masks) {
        if (m.mask.shape() != one) {
            throw DimensionError("stack_masks: mixed mask sizes");
        }
        v.insert(v.end(), m.mask.data().begin(), m.mask.data().end());
    }
    return Tensor::from_data({masks.size(), 1, one[2], one[3]}, std::move(v));
}

Tensor labelmix_consistency(const Discriminator& d, const Tensor& x_real, const Tensor& x_fake, const Tensor& mask) {
    const Tensor mixed_out = d(labelmix(x_real, x_fake, mask));
    const Tensor out_mixed = labelmix(d(x_real), d(x_fake), mask);
    return mean_squared_error(mixed_out, out_mixed);
}

} // namespace csg0
