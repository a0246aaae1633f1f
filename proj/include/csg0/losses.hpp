#pragma once

#include "csg0/labelspace.hpp"
#include "csg0/rng.hpp"
#include "csg0/tensor.hpp"

#include <functional>
#include <vector>

namespace csg0 {

// Fixed LabelMix consistency weight added to the discriminator loss.
inline constexpr double kLabelMixWeight = 5.0;

/// Class-weighted cross-entropy of the true class for generated images:
/// -sum_c alpha_c sum_ij S_ijc log p_ijc, averaged over the batch.
/// d_logits has C+1 channels; the last one is "fake".
Tensor generator_loss(const Tensor& d_logits_fake, const Tensor& onehot, const std::vector<double>& alpha);

/// Weighted C-class cross-entropy on real pixels plus -sum_ij log p_ij(fake)
/// on generated ones, averaged over the batch.
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake, const Tensor& onehot,
                          const std::vector<double>& alpha);

// mask*x_real + (1-mask)*x_fake; mask [N,1,H,W] broadcast over channels.
Tensor labelmix(const Tensor& x_real, const Tensor& x_fake, const Tensor& mask);

struct LabelMixMask {
    Tensor mask; // [1,1,H,W], binary
    std::uint64_t seed = 0;
};

// One fair coin per class present in `map` (in ascending id order).
LabelMixMask sample_labelmix_mask(const SemanticMap& map, std::uint64_t seed);

// Batched masks stacked to [N,1,H,W].
Tensor stack_masks(const std::vector<LabelMixMask>& masks);

using Discriminator = std::function<Tensor(const Tensor&)>;

/// Mean squared difference between D(mix(x, x_hat)) and mix(D(x), D(x_hat))
/// on raw logits.
Tensor labelmix_consistency(const Discriminator& d, const Tensor& x_real, const Tensor& x_fake, const Tensor& mask);

} // namespace csg0
