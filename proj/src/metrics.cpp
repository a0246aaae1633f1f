#include "csg0/metrics.hpp"

#include "csg0/errors.hpp"
#include "csg0/rng.hpp"
#include "csg0/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>

namespace csg0 {

namespace {

Tensor seeded_conv(Rng& rng, std::size_t cout, std::size_t cin) {
    const double s = std::sqrt(2.0 / static_cast<double>(cin * 9));
    std::vector<double> v(cout * cin * 9);
    for (auto& x : v) {
        x = s * rng.normal();
    }
    return Tensor::from_data({cout, cin, 3, 3}, std::move(v));
}

Tensor bias_vector(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = 0.1 * rng.normal();
    }
    return Tensor::from_data({n}, std::move(v));
}

} // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) {
    Rng rng(seed);
    w1_ = seeded_conv(rng, 32, 3);
    b1_ = bias_vector(rng, 32);
    w2_ = seeded_conv(rng, kFeatureDim, 32);
    b2_ = bias_vector(rng, kFeatureDim);
}

std::vector<std::vector<double>> FeatureExtractor::features(const Tensor& x) const {
    NoGradGuard guard;
    const Tensor h = relu(conv2d(avg_pool2(relu(conv2d(x, w1_, b1_, 1))), w2_, b2_, 1));
    const std::size_t n = h.dim(0);
    const std::size_t plane = h.dim(2) * h.dim(3);
    const auto d = h.data();
    std::vector<std::vector<double>> out(n, std::vector<double>(kFeatureDim));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < kFeatureDim; ++c) {
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                acc += d[(i * kFeatureDim + c) * plane + p];
            }
            out[i][c] = acc / static_cast<double>(plane);
        }
    }
    return out;
}

GaussianSummary summarize_features(std::vector<std::vector<double>> feats) {
    if (feats.size() < 2) {
        throw ValidationError("summarize needs at least 2 images, got " + std::to_string(feats.size()));
    }
    const std::size_t dim = feats.front().size();
    for (const auto& f : feats) {
        if (f.size() != dim) {
            throw DimensionError("summarize: feature vectors of different length");
        }
    }
    std::sort(feats.begin(), feats.end());
    GaussianSummary s;
    s.count = feats.size();
    s.mean.assign(dim, 0.0);
    s.var.assign(dim, 0.0);
    for (const auto& f : feats) {
        for (std::size_t c = 0; c < dim; ++c) {
            s.mean[c] += f[c];
        }
    }
    for (auto& m : s.mean) {
        m /= static_cast<double>(s.count);
    }
    for (const auto& f : feats) {
        for (std::size_t c = 0; c < dim; ++c) {
            const double d = f[c] - s.mean[c];
            s.var[c] += d * d;
        }
    }
    for (auto& v : s.var) {
        v /= static_cast<double>(s.count - 1);
    }
    return s;
}

GaussianSummary summarize(std::span<const Tensor> images, const FeatureExtractor& fe) {
    std::vector<std::vector<double>> feats;
    for (const auto& img : images) {
        for (auto& f : fe.features(img)) {
            feats.push_back(std::move(f));
        }
    }
    return summarize_features(std::move(feats));
}

double proxy_fid(const GaussianSummary& a, const GaussianSummary& b) {
    if (a.mean.size() != b.mean.size() || a.var.size() != b.var.size() || a.mean.size() != a.var.size()) {
        throw DimensionError("proxy_fid: summaries have different dimensions");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double dm = a.mean[i] - b.mean[i];
        d += dm * dm;
    }
    for (std::size_t i = 0; i < a.var.size(); ++i) {
        // (sa - sb)^2 equals sa^2 + sb^2 - 2 sa sb and is exactly symmetric and >= 0.
        const double ds = std::sqrt(a.var[i]) - std::sqrt(b.var[i]);
        d += ds * ds;
    }
    return d;
}

double miou(const SemanticMap& pred, const SemanticMap& gt, std::size_t classes) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw DimensionError("miou: prediction and ground truth differ in size");
    }
    std::vector<std::size_t> inter(classes, 0);
    std::vector<std::size_t> uni(classes, 0);
    std::vector<bool> present(classes, false);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const int g = gt.labels[i];
        const int p = pred.labels[i];
        if (g < 0 || static_cast<std::size_t>(g) >= classes || p < 0 || static_cast<std::size_t>(p) >= classes) {
            throw ValidationError("miou: label outside [0, " + std::to_string(classes) + ")");
        }
        present[static_cast<std::size_t>(g)] = true;
        if (g == p) {
            ++inter[static_cast<std::size_t>(g)];
            ++uni[static_cast<std::size_t>(g)];
        } else {
            ++uni[static_cast<std::size_t>(g)];
            ++uni[static_cast<std::size_t>(p)];
        }
    }
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (present[c]) {
            total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
            ++n;
        }
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

SemanticMap Segmenter::segment(const Tensor& image) const {
    if (!trained_ || !net_) {
        throw ValidationError("segmenter has not been trained");
    }
    NoGradGuard guard;
    const Tensor logits = net_->forward(image);
    const std::size_t h = logits.dim(2);
    const std::size_t w = logits.dim(3);
    const auto d = logits.data();
    SemanticMap out(h, w);
    for (std::size_t p = 0; p < h * w; ++p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes_; ++c) {
            if (d[c * h * w + p] > d[best * h * w + p]) {
                best = c;
            }
        }
        out.labels[p] = static_cast<int>(best);
    }
    return out;
}

Segmenter train_segmenter(std::span<const Scene> data, std::size_t classes, std::size_t iterations,
                          std::uint64_t seed, const DiscriminatorConfig& config) {
    if (data.empty() || classes == 0) {
        throw ValidationError("train_segmenter: empty data or no classes");
    }
    Segmenter s;
    s.classes_ = classes;
    s.net_.emplace(config, classes, hash_combine(seed, 0x534547));
    s.net_->set_trainable(true);
    std::vector<std::pair<std::string, Tensor>> params(s.net_->params().begin(), s.net_->params().end());
    Adam opt(params, {1e-3, 0.9, 0.999, 1e-8});
    for (std::size_t it = 0; it < iterations; ++it) {
        Rng rng(hash_combine(seed, it));
        const auto& scene = data[rng.below(data.size())];
        const std::vector<SemanticMap> maps{scene.mask};
        const Tensor onehot = encode_onehot(maps, classes);
        const double pixels = static_cast<double>(scene.mask.labels.size());
        opt.zero_grad();
        backward(scale(sum(hadamard(log_softmax_channels(s.net_->forward(scene.image)), onehot)), -1.0 / pixels));
        opt.step();
    }
    s.trained_ = iterations > 0;
    return s;
}

double segmentation_miou(const Segmenter& segmenter, std::span<const Tensor> images,
                         std::span<const SemanticMap> masks) {
    if (images.size() != masks.size() || images.empty()) {
        throw ValidationError("segmentation_miou: need one mask per image");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        total += miou(segmenter.segment(images[i]), masks[i], segmenter.classes());
    }
    return total / static_cast<double>(images.size());
}

double gan_test(const GeneratorModel& model, std::string_view domain, const Segmenter& segmenter,
                std::span<const SemanticMap> masks, std::uint64_t seed) {
    if (!segmenter.trained()) {
        throw ValidationError("gan_test: segmenter has not been trained");
    }
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const Tensor z = sample_noise(1, model.config().z_dim, hash_combine(seed, i));
        images.push_back(generate(model, z, masks.subspan(i, 1), domain));
    }
    return segmentation_miou(segmenter, images, masks);
}

void write_metric_row(std::ostream& out, std::string_view run_id, std::size_t step, std::string_view metric,
                      double value) {
    out << run_id << ',' << step << ',' << metric << ',' << std::setprecision(17) << value << '\n';
}

} // namespace csg0
