#include "csg0/tensor.hpp"

#include "csg0/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace csg0 {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != value.size()) {
        grad.assign(value.size(), 0.0);
    }
    return grad;
}

} // namespace detail

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

thread_local bool g_grad_enabled = true;

NodePtr make_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    if (shape_numel(shape) != value.size()) {
        throw DimensionError("tensor data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

// Wraps an op result; records the graph only when something upstream needs grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
    auto node = make_leaf(std::move(shape), std::move(value), false);
    if (g_grad_enabled) {
        const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
            return t.defined() && t.requires_grad();
        });
        if (needs) {
            node->requires_grad = true;
            for (auto& t : inputs) {
                node->inputs.push_back(t.defined() ? t.node() : nullptr);
            }
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

// Grad buffer of input `i` if it participates in backward, else nullptr.
std::vector<double>* input_grad(Node& self, std::size_t i) {
    auto& in = self.inputs[i];
    if (!in || !in->requires_grad) {
        return nullptr;
    }
    return &in->ensure_grad();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_nchw(const Tensor& x, const char* op) {
    if (x.ndim() != 4) {
        throw DimensionError(std::string(op) + ": expected NCHW tensor, got " + shape_str(x.shape()));
    }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
    const auto xs = x.data();
    std::vector<double> out(xs.size());
    std::transform(xs.begin(), xs.end(), out.begin(), fwd);
    return make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
        auto* gx = input_grad(self, 0);
        if (!gx) {
            return;
        }
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            (*gx)[i] += self.grad[i] * deriv(xv[i], self.value[i]);
        }
    });
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const Shape& Tensor::shape() const {
    if (!node_) {
        throw ContractError("access to an undefined tensor");
    }
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<double> Tensor::data() {
    shape();
    return node_->value;
}

std::span<const double> Tensor::data() const {
    shape();
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    shape();
    if (!node_->is_leaf()) {
        throw ContractError("requires_grad can only be toggled on leaf tensors");
    }
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    shape();
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    shape();
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    if (node_) {
        node_->grad.clear();
    }
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

Tensor Tensor::detach() const { return Tensor(make_leaf(shape(), node_->value, false)); }

Tensor Tensor::clone() const { return Tensor(make_leaf(shape(), node_->value, requires_grad())); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Backward pass

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a tensor that does not require grad");
    }
    // Iterative post-order DFS gives a topological order without recursion depth limits.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child && child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    // Interior grads are scratch space for this pass only.
    for (Node* n : order) {
        if (!n->is_leaf()) {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (!(*it)->is_leaf()) {
            (*it)->backward(**it);
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto as = a.data();
    const auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] + bs[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto* g = input_grad(self, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) {
                    (*g)[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto as = a.data();
    const auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] - bs[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
        if (auto* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] -= self.grad[i];
            }
        }
    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    const auto as = a.data();
    const auto bs = b.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] * bs[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * bv[i];
            }
        }
        if (auto* g = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * av[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    const auto as = a.data();
    std::vector<double> out(as.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = as[i] * factor;
    }
    return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * factor;
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor mask_mul(const Tensor& x, const Tensor& mask) {
    require_nchw(x, "mask_mul");
    require_nchw(mask, "mask_mul");
    const auto& s = x.shape();
    if (mask.dim(0) != s[0] || mask.dim(1) != 1 || mask.dim(2) != s[2] || mask.dim(3) != s[3]) {
        throw DimensionError("mask_mul: mask " + shape_str(mask.shape()) + " does not broadcast over " +
                             shape_str(s));
    }
    const std::size_t channels = s[1];
    const std::size_t plane = s[2] * s[3];
    const auto xs = x.data();
    const auto ms = mask.data();
    std::vector<double> out(xs.size());
    for (std::size_t n = 0; n < s[0]; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                out[base + p] = xs[base + p] * ms[n * plane + p];
            }
        }
    }
    return make_result(s, std::move(out), {x, mask}, [channels, plane](Node& self) {
        const std::size_t batch = self.shape[0];
        const auto& xv = self.inputs[0]->value;
        const auto& mv = self.inputs[1]->value;
        auto* gx = input_grad(self, 0);
        auto* gm = input_grad(self, 1);
        for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t base = (n * channels + c) * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    if (gx) {
                        (*gx)[base + p] += self.grad[base + p] * mv[n * plane + p];
                    }
                    if (gm) {
                        (*gm)[n * plane + p] += self.grad[base + p] * xv[base + p];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Channel plumbing and resampling

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_channels: no inputs");
    }
    for (const auto& p : parts) {
        require_nchw(p, "concat_channels");
        if (p.dim(0) != parts[0].dim(0) || p.dim(2) != parts[0].dim(2) || p.dim(3) != parts[0].dim(3)) {
            throw DimensionError("concat_channels: " + shape_str(p.shape()) + " vs " +
                                 shape_str(parts[0].shape()));
        }
    }
    const std::size_t batch = parts[0].dim(0);
    const std::size_t plane = parts[0].dim(2) * parts[0].dim(3);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(batch * total * plane);
    for (std::size_t n = 0; n < batch; ++n) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const auto src = parts[k].data().subspan(n * widths[k] * plane, widths[k] * plane);
            std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((n * total + offset) * plane));
            offset += widths[k];
        }
    }
    Shape shape{batch, total, parts[0].dim(2), parts[0].dim(3)};
    return make_result(shape, std::move(out), parts, [widths, total, plane](Node& self) {
        const std::size_t batch = self.shape[0];
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (auto* g = input_grad(self, k)) {
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t i = 0; i < widths[k] * plane; ++i) {
                        (*g)[n * widths[k] * plane + i] += self.grad[(n * total + offset) * plane + i];
                    }
                }
            }
            offset += widths[k];
        }
    });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
    require_nchw(x, "slice_channels");
    const std::size_t channels = x.dim(1);
    if (begin >= end || end > channels) {
        throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_str(x.shape()));
    }
    const std::size_t batch = x.dim(0);
    const std::size_t plane = x.dim(2) * x.dim(3);
    const std::size_t width = end - begin;
    const auto xs = x.data();
    std::vector<double> out(batch * width * plane);
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>((n * channels + begin) * plane), width * plane,
                    out.begin() + static_cast<std::ptrdiff_t>(n * width * plane));
    }
    Shape shape{batch, width, x.dim(2), x.dim(3)};
    return make_result(shape, std::move(out), {x}, [channels, begin, width, plane](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            for (std::size_t n = 0; n < self.shape[0]; ++n) {
                for (std::size_t i = 0; i < width * plane; ++i) {
                    (*g)[(n * channels + begin) * plane + i] += self.grad[n * width * plane + i];
                }
            }
        }
    });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
    require_nchw(x, "upsample_nearest");
    if (factor == 0) {
        throw DimensionError("upsample_nearest: factor must be positive");
    }
    const std::size_t nc = x.dim(0) * x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t w = x.dim(3);
    const std::size_t oh = h * factor;
    const std::size_t ow = w * factor;
    const auto xs = x.data();
    std::vector<double> out(nc * oh * ow);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                out[(c * oh + i) * ow + j] = xs[(c * h + i / factor) * w + j / factor];
            }
        }
    }
    Shape shape{x.dim(0), x.dim(1), oh, ow};
    return make_result(shape, std::move(out), {x}, [nc, h, w, factor](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            const std::size_t oh = h * factor;
            const std::size_t ow = w * factor;
            for (std::size_t c = 0; c < nc; ++c) {
                for (std::size_t i = 0; i < oh; ++i) {
                    for (std::size_t j = 0; j < ow; ++j) {
                        (*g)[(c * h + i / factor) * w + j / factor] += self.grad[(c * oh + i) * ow + j];
                    }
                }
            }
        }
    });
}

Tensor avg_pool2(const Tensor& x) {
    require_nchw(x, "avg_pool2");
    const std::size_t h = x.dim(2);
    const std::size_t w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avg_pool2: spatial size must be even, got " + shape_str(x.shape()));
    }
    const std::size_t nc = x.dim(0) * x.dim(1);
    const std::size_t oh = h / 2;
    const std::size_t ow = w / 2;
    const auto xs = x.data();
    std::vector<double> out(nc * oh * ow);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const double* p = xs.data() + (c * h + 2 * i) * w + 2 * j;
                out[(c * oh + i) * ow + j] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
            }
        }
    }
    Shape shape{x.dim(0), x.dim(1), oh, ow};
    return make_result(shape, std::move(out), {x}, [nc, h, w](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            const std::size_t oh = h / 2;
            const std::size_t ow = w / 2;
            for (std::size_t c = 0; c < nc; ++c) {
                for (std::size_t i = 0; i < oh; ++i) {
                    for (std::size_t j = 0; j < ow; ++j) {
                        const double v = 0.25 * self.grad[(c * oh + i) * ow + j];
                        double* p = g->data() + (c * h + 2 * i) * w + 2 * j;
                        p[0] += v;
                        p[1] += v;
                        p[w] += v;
                        p[w + 1] += v;
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding) {
    require_nchw(input, "conv2d");
    if (weight.ndim() != 4 || weight.dim(1) != input.dim(1) || weight.dim(2) != weight.dim(3)) {
        throw DimensionError("conv2d: input " + shape_str(input.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != weight.dim(0))) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    kernels::ConvGeometry g;
    g.batch = input.dim(0);
    g.in_channels = input.dim(1);
    g.height = input.dim(2);
    g.width = input.dim(3);
    g.out_channels = weight.dim(0);
    g.kernel = weight.dim(2);
    g.padding = padding;
    if (g.height + 2 * padding < g.kernel || g.width + 2 * padding < g.kernel) {
        throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                             shape_str(input.shape()));
    }
    std::vector<double> out(g.output_size());
    kernels::parallel::conv2d_forward(g, input.data(), weight.data(),
                                      bias.defined() ? bias.data() : std::span<const double>{}, out);
    Shape shape{g.batch, g.out_channels, g.out_height(), g.out_width()};
    return make_result(shape, std::move(out), {input, weight, bias}, [g](Node& self) {
        auto* gx = input_grad(self, 0);
        auto* gw = input_grad(self, 1);
        auto* gb = self.inputs[2] ? input_grad(self, 2) : nullptr;
        if (gx) {
            kernels::parallel::conv2d_backward_input(g, self.inputs[1]->value, self.grad, *gx);
        }
        if (gw || gb) {
            kernels::parallel::conv2d_backward_params(
                g, self.inputs[0]->value, self.grad, gw ? std::span<double>(*gw) : std::span<double>{},
                gb ? std::span<double>(*gb) : std::span<double>{});
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and log-softmax

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_nchw(x, "instance_norm");
    const std::size_t batch = x.dim(0);
    const std::size_t channels = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw DimensionError("instance_norm: affine " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                             " does not match " + shape_str(x.shape()));
    }
    if (plane == 0 || !(eps > 0.0)) {
        throw DimensionError("instance_norm: needs H*W >= 1 and eps > 0");
    }
    const auto xs = x.data();
    const auto gs = gamma.data();
    const auto bs = beta.data();
    std::vector<double> out(xs.size());
    // Saved per (n, c): normalized values and inverse std for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(xs.size());
    auto inv_std = std::make_shared<std::vector<double>>(batch * channels);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * plane;
            double mu = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                mu += xs[base + p];
            }
            mu /= static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                const double d = xs[base + p] - mu;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[n * channels + c] = is;
            for (std::size_t p = 0; p < plane; ++p) {
                const double h = (xs[base + p] - mu) * is;
                (*xhat)[base + p] = h;
                out[base + p] = gs[c] * h + bs[c];
            }
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [batch, channels, plane, xhat, inv_std](Node& self) {
        auto* gx = input_grad(self, 0);
        auto* gg = input_grad(self, 1);
        auto* gb = input_grad(self, 2);
        const auto& gamma_v = self.inputs[1]->value;
        const double count = static_cast<double>(plane);
        for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t base = (n * channels + c) * plane;
                double sum_dy = 0.0;
                double sum_dy_h = 0.0;
                for (std::size_t p = 0; p < plane; ++p) {
                    sum_dy += self.grad[base + p];
                    sum_dy_h += self.grad[base + p] * (*xhat)[base + p];
                }
                if (gg) {
                    (*gg)[c] += sum_dy_h;
                }
                if (gb) {
                    (*gb)[c] += sum_dy;
                }
                if (gx) {
                    const double k = gamma_v[c] * (*inv_std)[n * channels + c];
                    for (std::size_t p = 0; p < plane; ++p) {
                        (*gx)[base + p] +=
                            k * (self.grad[base + p] - sum_dy / count - (*xhat)[base + p] * sum_dy_h / count);
                    }
                }
            }
        }
    });
}

Tensor log_softmax_channels(const Tensor& x) {
    require_nchw(x, "log_softmax_channels");
    const std::size_t batch = x.dim(0);
    const std::size_t channels = x.dim(1);
    const std::size_t plane = x.dim(2) * x.dim(3);
    const auto xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t base = n * channels * plane + p;
            double mx = xs[base];
            for (std::size_t c = 1; c < channels; ++c) {
                mx = std::max(mx, xs[base + c * plane]);
            }
            double acc = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
                acc += std::exp(xs[base + c * plane] - mx);
            }
            const double lse = mx + std::log(acc);
            for (std::size_t c = 0; c < channels; ++c) {
                out[base + c * plane] = xs[base + c * plane] - lse;
            }
        }
    }
    return make_result(x.shape(), std::move(out), {x}, [batch, channels, plane](Node& self) {
        auto* gx = input_grad(self, 0);
        if (!gx) {
            return;
        }
        for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t base = n * channels * plane + p;
                double gsum = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    gsum += self.grad[base + c * plane];
                }
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t i = base + c * plane;
                    (*gx)[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    const auto xs = x.data();
    double acc = 0.0;
    for (double v : xs) {
        acc += v;
    }
    return make_result({1}, {acc}, {x}, [](Node& self) {
        if (auto* g = input_grad(self, 0)) {
            for (auto& v : *g) {
                v += self.grad[0];
            }
        }
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_squared_error(const Tensor& a, const Tensor& b) {
    const Tensor d = sub(a, b);
    return mean(hadamard(d, d));
}

} // namespace csg0
