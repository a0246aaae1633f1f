#pragma once

#include "csg0/labelspace.hpp"
#include "csg0/netblocks.hpp"
#include "csg0/tensor.hpp"
#include "csg0/toyscenes.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace csg0 {

inline constexpr std::uint64_t kFeatureSeed = 0xC5900;
inline constexpr std::size_t kFeatureDim = 64;

/// Two fixed random 3x3 convs (3->32->64) with ReLU, a 2x2 average pool
/// in between, and global average pooling. Never trained.
class FeatureExtractor {
  public:
    explicit FeatureExtractor(std::uint64_t seed = kFeatureSeed);
    // One 64-vector per image of x [N,3,H,W].
    std::vector<std::vector<double>> features(const Tensor& x) const;

  private:
    Tensor w1_, b1_, w2_, b2_;
};

struct GaussianSummary {
    std::vector<double> mean;
    std::vector<double> var; // unbiased, per dimension
    std::size_t count = 0;
};

// Feature vectors are sorted before the reduction, so the result does not
// depend on input order at all.
GaussianSummary summarize_features(std::vector<std::vector<double>> feats);
GaussianSummary summarize(std::span<const Tensor> images, const FeatureExtractor& fe);

// Fréchet distance between diagonal Gaussians.
double proxy_fid(const GaussianSummary& a, const GaussianSummary& b);

// Mean IoU over the classes present in gt.
double miou(const SemanticMap& pred, const SemanticMap& gt, std::size_t classes);

/// Per-pixel classifier with the discriminator's U-Net body and a C-way head.
class Segmenter {
  public:
    Segmenter() = default;
    bool trained() const { return trained_; }
    std::size_t classes() const { return classes_; }
    SemanticMap segment(const Tensor& image) const; // image [1,3,H,W]

    friend Segmenter train_segmenter(std::span<const Scene> data, std::size_t classes, std::size_t iterations,
                                     std::uint64_t seed, const DiscriminatorConfig& config);

  private:
    std::optional<DiscriminatorModel> net_;
    std::size_t classes_ = 0;
    bool trained_ = false;
};

Segmenter train_segmenter(std::span<const Scene> data, std::size_t classes, std::size_t iterations,
                          std::uint64_t seed, const DiscriminatorConfig& config = {});

// Mean mIoU of the segmenter on images generated from `masks`.
double gan_test(const GeneratorModel& model, std::string_view domain, const Segmenter& segmenter,
                std::span<const SemanticMap> masks, std::uint64_t seed);

// Mean mIoU of the segmenter on given images.
double segmentation_miou(const Segmenter& segmenter, std::span<const Tensor> images,
                         std::span<const SemanticMap> masks);

void write_metric_row(std::ostream& out, std::string_view run_id, std::size_t step, std::string_view metric,
                      double value);

} // namespace csg0
