#include "tmdit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "tmdit/kernels.hpp"

namespace tmdit {

namespace k = kernels::omp;

namespace {

std::atomic<std::uint64_t> g_seq{0};
thread_local bool g_grad_enabled = true;

int normalize_axis(int axis, int rank) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return a;
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
    std::vector<std::int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
    return s;
}

// Output shape plus per-operand strides aligned to it (0 on broadcast axes).
struct BroadcastPlan {
    Shape out;
    std::vector<std::int64_t> stride_a;
    std::vector<std::int64_t> stride_b;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    BroadcastPlan plan;
    plan.out.assign(r, 1);
    plan.stride_a.assign(r, 0);
    plan.stride_b.assign(r, 0);
    const auto sa = strides_of(a);
    const auto sb = strides_of(b);
    for (std::size_t i = 0; i < r; ++i) {
        const std::ptrdiff_t ia = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(r - a.size());
        const std::ptrdiff_t ib = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(r - b.size());
        const std::int64_t da = ia >= 0 ? a[ia] : 1;
        const std::int64_t db = ib >= 0 ? b[ib] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        plan.out[i] = da == 1 ? db : da;
        if (ia >= 0 && da != 1) plan.stride_a[i] = sa[ia];
        if (ib >= 0 && db != 1) plan.stride_b[i] = sb[ib];
    }
    return plan;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
    const std::int64_t n = shape_numel(plan.out);
    if (n == 0) return;
    const int r = static_cast<int>(plan.out.size());
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t ia = 0;
    std::int64_t ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (int d = r - 1; d >= 0; --d) {
            ++idx[d];
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (idx[d] < plan.out[d]) break;
            ia -= plan.stride_a[d] * idx[d];
            ib -= plan.stride_b[d] * idx[d];
            idx[d] = 0;
        }
    }
}

bool needs_grad(const detail::Node& self, std::size_t parent) {
    return self.parents[parent]->requires_grad;
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dfdx, const char* name) {
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(x.shape(), std::move(out), {x}, [dfdx](detail::Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.data[i], self.data[i]);
    }, name);
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)), value);
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = g_seq.fetch_add(1);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::int64_t Tensor::dim(int axis) const { return node_->shape[normalize_axis(axis, rank())]; }

int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node_->data.size()); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

std::span<const double> Tensor::grad() const { return node_->grad; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    if (static_cast<int>(index.size()) != rank()) throw ShapeError("index rank mismatch");
    const auto st = strides_of(shape());
    std::int64_t off = 0;
    int i = 0;
    for (auto v : index) {
        if (v < 0 || v >= shape()[i]) throw ShapeError("index out of range");
        off += v * st[i++];
    }
    return node_->data[off];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->data); }

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad()); }

void Tensor::backward() const {
    if (numel() != 1) throw ShapeError("backward() needs a single-element tensor");
    if (!node_->requires_grad) return;

    std::vector<detail::Node*> order;
    std::vector<detail::Node*> stack{node_.get()};
    std::unordered_set<const detail::Node*> seen{node_.get()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq > b->seq; });
    node_->grad_buffer()[0] += 1.0;
    for (auto* n : order) {
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// ---------------------------------------------------------------------------
// Tape plumbing

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward, const char* op_name) {
    for (double v : data) {
        if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op_name);
    }
    Tensor out = Tensor::from(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(inputs.size());
    for (const auto& t : inputs) node.parents.push_back(t.node());
    node.backward = std::move(backward);
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    const auto plan = plan_broadcast(a.shape(), b.shape());
    std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
    const auto da = a.data();
    const auto db = b.data();
    for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { out[i] = da[ia] + db[ib]; });
    return make_result(plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
        const bool ga = needs_grad(self, 0);
        const bool gb = needs_grad(self, 1);
        double* pa = ga ? self.parents[0]->grad_buffer().data() : nullptr;
        double* pb = gb ? self.parents[1]->grad_buffer().data() : nullptr;
        for_each_broadcast(plan, [&](auto i, auto ia, auto ib) {
            if (ga) pa[ia] += self.grad[i];
            if (gb) pb[ib] += self.grad[i];
        });
    }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const auto plan = plan_broadcast(a.shape(), b.shape());
    std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
    const auto da = a.data();
    const auto db = b.data();
    for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { out[i] = da[ia] - db[ib]; });
    return make_result(plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
        const bool ga = needs_grad(self, 0);
        const bool gb = needs_grad(self, 1);
        double* pa = ga ? self.parents[0]->grad_buffer().data() : nullptr;
        double* pb = gb ? self.parents[1]->grad_buffer().data() : nullptr;
        for_each_broadcast(plan, [&](auto i, auto ia, auto ib) {
            if (ga) pa[ia] += self.grad[i];
            if (gb) pb[ib] -= self.grad[i];
        });
    }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const auto plan = plan_broadcast(a.shape(), b.shape());
    std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
    const auto da = a.data();
    const auto db = b.data();
    for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { out[i] = da[ia] * db[ib]; });
    return make_result(plan.out, std::move(out), {a, b}, [plan](detail::Node& self) {
        const bool ga = needs_grad(self, 0);
        const bool gb = needs_grad(self, 1);
        const auto& xa = self.parents[0]->data;
        const auto& xb = self.parents[1]->data;
        double* pa = ga ? self.parents[0]->grad_buffer().data() : nullptr;
        double* pb = gb ? self.parents[1]->grad_buffer().data() : nullptr;
        for_each_broadcast(plan, [&](auto i, auto ia, auto ib) {
            if (ga) pa[ia] += self.grad[i] * xb[ib];
            if (gb) pb[ib] += self.grad[i] * xa[ia];
        });
    }, "mul");
}

Tensor scale(const Tensor& x, double s) {
    return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, "square");
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [inv_sqrt_2pi](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        },
        "gelu");
}

Tensor silu(const Tensor& x) {
    return unary(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        },
        "silu");
}

// ---------------------------------------------------------------------------
// Contractions

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
    const std::int64_t m = a.dim(-2);
    const std::int64_t kk = a.dim(-1);
    const std::int64_t n = b.dim(-1);
    if (b.dim(-2) != kk) {
        throw ShapeError("matmul inner dims disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const bool shared = b.rank() == 2;
    Shape batch(a.shape().begin(), a.shape().end() - 2);
    if (!shared) {
        Shape bb(b.shape().begin(), b.shape().end() - 2);
        if (bb != batch) {
            throw ShapeError("matmul batch dims disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
        }
    }
    const std::int64_t nb = shape_numel(batch);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(nb * m * n), 0.0);
    if (shared) {
        k::gemm_nn(nb * m, kk, n, a.data().data(), b.data().data(), out.data());
    } else {
        for (std::int64_t i = 0; i < nb; ++i) {
            k::gemm_nn(m, kk, n, a.data().data() + i * m * kk, b.data().data() + i * kk * n, out.data() + i * m * n);
        }
    }
    return make_result(std::move(out_shape), std::move(out), {a, b}, [=](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (shared) {
            if (pa.requires_grad) k::gemm_nt(nb * m, n, kk, g, pb.data.data(), pa.grad_buffer().data());
            if (pb.requires_grad) k::gemm_tn(kk, nb * m, n, pa.data.data(), g, pb.grad_buffer().data());
            return;
        }
        for (std::int64_t i = 0; i < nb; ++i) {
            if (pa.requires_grad) {
                k::gemm_nt(m, n, kk, g + i * m * n, pb.data.data() + i * kk * n, pa.grad_buffer().data() + i * m * kk);
            }
            if (pb.requires_grad) {
                k::gemm_tn(kk, m, n, pa.data.data() + i * m * kk, g + i * m * n, pb.grad_buffer().data() + i * kk * n);
            }
        }
    }, "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != a.rank()) throw ShapeError("matmul_nt needs equal-rank operands");
    const std::int64_t m = a.dim(-2);
    const std::int64_t kk = a.dim(-1);
    const std::int64_t n = b.dim(-2);
    Shape batch(a.shape().begin(), a.shape().end() - 2);
    if (b.dim(-1) != kk || Shape(b.shape().begin(), b.shape().end() - 2) != batch) {
        throw ShapeError("matmul_nt shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t nb = shape_numel(batch);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(nb * m * n), 0.0);
    for (std::int64_t i = 0; i < nb; ++i) {
        k::gemm_nt(m, kk, n, a.data().data() + i * m * kk, b.data().data() + i * n * kk, out.data() + i * m * n);
    }
    return make_result(std::move(out_shape), std::move(out), {a, b}, [=](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        for (std::int64_t i = 0; i < nb; ++i) {
            if (pa.requires_grad) {
                k::gemm_nn(m, n, kk, g + i * m * n, pb.data.data() + i * n * kk, pa.grad_buffer().data() + i * m * kk);
            }
            if (pb.requires_grad) {
                k::gemm_tn(n, m, kk, g + i * m * n, pa.data.data() + i * m * kk, pb.grad_buffer().data() + i * n * kk);
            }
        }
    }, "matmul_nt");
}

// ---------------------------------------------------------------------------
// Normalizations

namespace {

Tensor softmax_impl(const Tensor& x, std::span<const double> bias) {
    if (x.rank() < 1 || x.dim(-1) < 1) throw ShapeError("softmax needs a non-empty last dim");
    const std::int64_t cols = x.dim(-1);
    const std::int64_t rows = x.numel() / cols;
    std::vector<double> out(static_cast<std::size_t>(x.numel()));
    if (bias.empty()) {
        k::softmax_rows(rows, cols, x.data().data(), out.data());
    } else {
        if (static_cast<std::int64_t>(bias.size()) != cols) throw ShapeError("softmax bias length mismatch");
        std::vector<double> shifted(x.data().begin(), x.data().end());
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cols; ++c) shifted[r * cols + c] += bias[c];
        }
        k::softmax_rows(rows, cols, shifted.data(), out.data());
    }
    return make_result(x.shape(), std::move(out), {x}, [rows, cols](detail::Node& self) {
        k::softmax_rows_backward(rows, cols, self.data.data(), self.grad.data(),
                                 self.parents[0]->grad_buffer().data());
    }, "softmax");
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) { return softmax_impl(x, {}); }

Tensor softmax_lastdim_biased(const Tensor& x, std::span<const double> bias) { return softmax_impl(x, bias); }

Tensor layernorm_noaffine(const Tensor& x, double eps) {
    if (x.rank() < 1 || x.dim(-1) < 2) throw ShapeError("layernorm needs last dim >= 2");
    const std::int64_t cols = x.dim(-1);
    const std::int64_t rows = x.numel() / cols;
    std::vector<double> out(static_cast<std::size_t>(x.numel()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    k::layernorm_rows(rows, cols, eps, x.data().data(), out.data(), inv_std->data());
    return make_result(x.shape(), std::move(out), {x}, [rows, cols, inv_std](detail::Node& self) {
        k::layernorm_rows_backward(rows, cols, self.data.data(), inv_std->data(), self.grad.data(),
                                   self.parents[0]->grad_buffer().data());
    }, "layernorm");
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one -1");
            infer = i;
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) shape[infer] = known == 0 ? 0 : x.numel() / known;
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }, "reshape");
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
    const int r = x.rank();
    if (static_cast<int>(order.size()) != r) throw ShapeError("permute order rank mismatch");
    const auto in_strides = strides_of(x.shape());
    Shape out_shape(r);
    std::vector<std::int64_t> src_stride(r);
    for (int i = 0; i < r; ++i) {
        const int a = normalize_axis(order[i], r);
        out_shape[i] = x.shape()[a];
        src_stride[i] = in_strides[a];
    }
    const std::int64_t n = x.numel();
    auto src_index = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    {
        std::vector<std::int64_t> idx(r, 0);
        std::int64_t off = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            (*src_index)[i] = off;
            for (int d = r - 1; d >= 0; --d) {
                ++idx[d];
                off += src_stride[d];
                if (idx[d] < out_shape[d]) break;
                off -= src_stride[d] * idx[d];
                idx[d] = 0;
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(n));
    const auto in = x.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = in[(*src_index)[i]];
    return make_result(std::move(out_shape), std::move(out), {x}, [src_index](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*src_index)[i]] += self.grad[i];
    }, "permute");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const int r = parts[0].rank();
    const int a = normalize_axis(axis, r);
    Shape out_shape = parts[0].shape();
    out_shape[a] = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw ShapeError("concat rank mismatch");
        for (int d = 0; d < r; ++d) {
            if (d != a && p.shape()[d] != parts[0].shape()[d]) {
                throw ShapeError("concat shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
            }
        }
        out_shape[a] += p.shape()[a];
    }
    std::int64_t outer = 1;
    for (int d = 0; d < a; ++d) outer *= out_shape[d];
    std::int64_t inner = 1;
    for (int d = a + 1; d < r; ++d) inner *= out_shape[d];
    const std::int64_t out_chunk = out_shape[a] * inner;

    std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
    std::vector<std::int64_t> offsets;
    std::int64_t acc = 0;
    for (const auto& p : parts) {
        offsets.push_back(acc);
        const std::int64_t chunk = p.shape()[a] * inner;
        const auto src = p.data();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(src.begin() + o * chunk, chunk, out.begin() + o * out_chunk + acc);
        }
        acc += chunk;
    }
    return make_result(std::move(out_shape), std::move(out), parts, [=](detail::Node& self) {
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            auto& p = *self.parents[pi];
            if (!p.requires_grad) continue;
            const std::int64_t chunk = static_cast<std::int64_t>(p.data.size()) / std::max<std::int64_t>(outer, 1);
            auto& g = p.grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t j = 0; j < chunk; ++j) g[o * chunk + j] += self.grad[o * out_chunk + offsets[pi] + j];
            }
        }
    }, "concat");
}

Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
    const int r = x.rank();
    const int a = normalize_axis(axis, r);
    if (start < 0 || length < 0 || start + length > x.shape()[a]) {
        throw ShapeError("narrow [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of size " + std::to_string(x.shape()[a]));
    }
    Shape out_shape = x.shape();
    out_shape[a] = length;
    std::int64_t outer = 1;
    for (int d = 0; d < a; ++d) outer *= out_shape[d];
    std::int64_t inner = 1;
    for (int d = a + 1; d < r; ++d) inner *= out_shape[d];
    const std::int64_t in_chunk = x.shape()[a] * inner;
    const std::int64_t out_chunk = length * inner;
    const std::int64_t skip = start * inner;
    std::vector<double> out(static_cast<std::size_t>(outer * out_chunk));
    const auto src = x.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src.begin() + o * in_chunk + skip, out_chunk, out.begin() + o * out_chunk);
    }
    return make_result(std::move(out_shape), std::move(out), {x}, [=](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t j = 0; j < out_chunk; ++j) g[o * in_chunk + skip + j] += self.grad[o * out_chunk + j];
        }
    }, "narrow");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result({}, {total}, {x}, [](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (auto& v : g) v += self.grad[0];
    }, "sum");
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_lastdim(const Tensor& x) {
    const std::int64_t cols = x.dim(-1);
    if (cols == 0) throw ShapeError("mean over empty last dim");
    const std::int64_t rows = x.numel() / cols;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    std::vector<double> out(static_cast<std::size_t>(rows));
    const auto in = x.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += in[r * cols + c];
        out[r] = s / static_cast<double>(cols);
    }
    return make_result(std::move(out_shape), std::move(out), {x}, [rows, cols](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        const double inv = 1.0 / static_cast<double>(cols);
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r] * inv;
        }
    }, "mean_lastdim");
}

}  // namespace tmdit
