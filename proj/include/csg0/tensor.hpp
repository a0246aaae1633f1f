#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csg0 {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Raised by every op whose operand shapes do not line up.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Misuse of the autodiff API (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }
    std::vector<double>& ensure_grad();
};

} // namespace detail

/// Dense row-major tensor of 64-bit reals with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, like the
/// handles of the usual tensor libraries. Use clone() for a deep copy.
/// Ops record their inputs and a backward closure whenever grad mode is on
/// and at least one input requires grad; backward() replays them in reverse
/// topological order.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    bool is_leaf() const;
    Tensor detach() const;
    Tensor clone() const;

    // Internal: used by op implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

  private:
    std::shared_ptr<detail::Node> node_;
};

// Thread-local switch; ops executed while disabled record no graph.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

/// Accumulates d(loss)/d(t) into every reachable tensor that requires grad.
/// Leaf gradients accumulate across calls until zero_grad().
void backward(const Tensor& loss);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);

// x[N,C,H,W] times mask[N,1,H,W], broadcast over channels.
Tensor mask_mul(const Tensor& x, const Tensor& mask);

// Channel-axis plumbing on NCHW tensors.
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

Tensor upsample_nearest(const Tensor& x, std::size_t factor);
Tensor avg_pool2(const Tensor& x);

/// Stride-1 cross-correlation with zero padding. `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding);

/// Per-sample, per-channel normalization over H×W (population variance),
/// followed by gamma·x̂ + beta.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor log_softmax_channels(const Tensor& x);

// Reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_squared_error(const Tensor& a, const Tensor& b);

} // namespace csg0
