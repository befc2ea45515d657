#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmdit {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when a kernel produces NaN or Inf.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t seq = 0;     // creation order; backward walks it in reverse
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major tensor of doubles with an optional reverse-mode tape entry.
//
// Copies share storage (handle semantics), like the tensor types of the
// frameworks this mirrors. Ops never mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim(int axis) const;  // negative axes count from the end
    int rank() const;
    std::int64_t numel() const;

    std::span<const double> data() const;
    // Only meaningful for leaves (parameters, inputs); writes bypass the tape.
    std::span<double> mutable_data();
    std::span<const double> grad() const;  // empty span if nothing accumulated
    double item() const;
    double at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    void zero_grad();
    Tensor detach() const;
    Tensor clone() const;

    // Seeds d(this)/d(this) = 1 for a single-element tensor and propagates.
    void backward() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(detail::Node& self)>;

// Builds an op result. Records `backward` on the tape only when grad mode is
// on and some input requires grad. Throws NumericalError on non-finite data.
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward, const char* op_name);

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

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor square(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor silu(const Tensor& x);

// a[..., m, k] x b[..., k, n]. b is either rank 2 (shared) or has the same
// batch dims as a.
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., m, k] x b[..., n, k]^T with equal batch dims.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor softmax_lastdim(const Tensor& x);
// Adds `bias` (one value per key, broadcast over all leading dims) before the softmax.
Tensor softmax_lastdim_biased(const Tensor& x, std::span<const double> bias);
inline constexpr double kLayerNormEps = 1e-6;
Tensor layernorm_noaffine(const Tensor& x, double eps = kLayerNormEps);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_lastdim(const Tensor& x);  // [..., n] -> [...]

}  // namespace tmdit
