#include "emoq/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace emoq {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

struct Fault {
    std::string op;
    double factor = 1.0;
    bool active = false;
};
Fault g_fault;

using detail::Node;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Wraps forward output; attaches a tape node when gradients are needed.
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<const Tensor*>& inputs,
                   const char* op,
                   std::function<void(const TensorImpl&, std::span<const double>)> backward) {
    Tensor out(std::move(shape), std::move(data));
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor* t : inputs) needs = needs || t->requires_grad();
    }
    if (!needs) return out;
    auto node = std::make_shared<Node>();
    node->op = op;
    for (const Tensor* t : inputs) node->inputs.push_back(t->impl());
    node->backward = std::move(backward);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
    return out;
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
double* grad_of(const ImplPtr& impl) {
    if (!impl->requires_grad) return nullptr;
    impl->ensure_grad();
    return impl->grad.data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        std::ostringstream os;
        os << op << ": expected rank " << rank << ", got shape " << shape_str(t.shape());
        throw DimensionError(os.str());
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::uint64_t RngState::next_u64() {
    return splitmix64(seed ^ splitmix64(counter++));
}

double RngState::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngState::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngState::below: n must be positive");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

RngState RngState::fork() {
    return RngState{next_u64(), 0};
}

RngState derive_rng(std::uint64_t seed, std::uint64_t stream) {
    return RngState{splitmix64(seed ^ 0xA0761D6478BD642FULL) ^ splitmix64(stream + 0xE7037ED1A0B428DBULL), 0};
}

void detail::TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
    impl_->shape = {0};
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("Tensor: shape " + shape_str(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " elements, got " +
                             std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, RngState& rng, double stddev, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (double& v : data) v = rng.normal() * stddev;
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
std::size_t Tensor::dim(std::size_t axis) const { return impl_->shape.at(axis); }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }
double Tensor::at(std::size_t flat) const { return impl_->data.at(flat); }

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size() && numel() > 0; }
std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw DimensionError("backward() needs a scalar, got shape " + shape_str(shape()));
    }
    if (!impl_->requires_grad) return;

    // Iterative post-order DFS gives a topological order of the tape.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [cur, next_child] = stack.back();
        if (cur->node && next_child < cur->node->inputs.size()) {
            TensorImpl* child = cur->node->inputs[next_child++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(cur);
        stack.pop_back();
    }

    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    std::vector<double> scaled;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (!t->node || t->grad.empty()) continue;
        std::span<const double> g = t->grad;
        if (g_fault.active && g_fault.op == t->node->op) {
            scaled.assign(t->grad.begin(), t->grad.end());
            for (double& v : scaled) v *= g_fault.factor;
            g = scaled;
        }
        t->node->backward(*t, g);
    }
}

Tensor Tensor::detach() const {
    Tensor t(impl_->shape, impl_->data);
    return t;
}

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
    return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void testing::inject_backward_fault(std::string op, double factor) {
    g_fault = Fault{std::move(op), factor, true};
}

void testing::clear_backward_fault() { g_fault = Fault{}; }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
    auto ai = a.impl();
    auto bi = b.impl();
    return make_result({m, n}, std::move(out), {&a, &b}, "matmul",
                       [ai, bi, m, k, n](const TensorImpl&, std::span<const double> g) {
                           ConstMap G(g.data(), m, n);
                           if (double* ga = grad_of(ai)) {
                               MutMap(ga, m, k).noalias() += G * ConstMap(bi->data.data(), k, n).transpose();
                           }
                           if (double* gb = grad_of(bi)) {
                               MutMap(gb, k, n).noalias() += ConstMap(ai->data.data(), m, k).transpose() * G;
                           }
                       });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
    auto ai = a.impl();
    return make_result({n, m}, std::move(out), {&a}, "transpose",
                       [ai, m, n](const TensorImpl&, std::span<const double> g) {
                           if (double* ga = grad_of(ai)) {
                               MutMap(ga, m, n) += ConstMap(g.data(), n, m).transpose();
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1 || x.shape().back() != w.dim(0) ||
        b.dim(0) != w.dim(1)) {
        throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                             shape_str(w.shape()) + " b" + shape_str(b.shape()));
    }
    const std::size_t in = w.dim(0), out_dim = w.dim(1);
    const std::size_t rows = x.numel() / in;
    std::vector<double> out(rows * out_dim);
    MutMap Y(out.data(), rows, out_dim);
    Y.noalias() = ConstMap(x.data().data(), rows, in) * ConstMap(w.data().data(), in, out_dim);
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_dim);
    Shape shape = x.shape();
    shape.back() = out_dim;
    auto xi = x.impl(), wi = w.impl(), bi = b.impl();
    return make_result(std::move(shape), std::move(out), {&x, &w, &b}, "linear",
                       [xi, wi, bi, rows, in, out_dim](const TensorImpl&, std::span<const double> g) {
                           ConstMap G(g.data(), rows, out_dim);
                           if (double* gx = grad_of(xi)) {
                               MutMap(gx, rows, in).noalias() +=
                                   G * ConstMap(wi->data.data(), in, out_dim).transpose();
                           }
                           if (double* gw = grad_of(wi)) {
                               MutMap(gw, in, out_dim).noalias() +=
                                   ConstMap(xi->data.data(), rows, in).transpose() * G;
                           }
                           if (double* gb = grad_of(bi)) {
                               Eigen::Map<Eigen::RowVectorXd>(gb, out_dim) += G.colwise().sum();
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {&a, &b}, "add",
                       [ai, bi](const TensorImpl&, std::span<const double> g) {
                           if (double* ga = grad_of(ai)) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (double* gb = grad_of(bi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                           }
                       });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {&a, &b}, "sub",
                       [ai, bi](const TensorImpl&, std::span<const double> g) {
                           if (double* ga = grad_of(ai)) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (double* gb = grad_of(bi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                       });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result(a.shape(), std::move(out), {&a, &b}, "mul",
                       [ai, bi](const TensorImpl&, std::span<const double> g) {
                           if (double* ga = grad_of(ai)) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bi->data[i];
                           }
                           if (double* gb = grad_of(bi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ai->data[i];
                           }
                       });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    auto ai = a.impl();
    return make_result(a.shape(), std::move(out), {&a}, "scale",
                       [ai, factor](const TensorImpl&, std::span<const double> g) {
                           if (double* ga = grad_of(ai)) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
                           }
                       });
}

Tensor softmax(const Tensor& x, int axis) {
    if (x.rank() == 0) throw DimensionError("softmax: rank-0 input");
    const int rank = static_cast<int>(x.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw DimensionError("softmax: axis out of range for shape " + shape_str(x.shape()));
    }
    const Shape& s = x.shape();
    const std::size_t n = s[axis];
    if (n == 0) throw DimensionError("softmax: empty axis");
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < rank; ++i) inner *= s[i];

    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < inner; ++j) {
            const std::size_t base = o * n * inner + j;
            double mx = kNegInf;
            for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
            if (mx == kNegInf) throw std::domain_error("softmax: every entry of a row is -inf");
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(in[base + i * inner] - mx);
                out[base + i * inner] = e;
                total += e;
            }
            for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
        }
    }
    auto xi = x.impl();
    return make_result(s, std::move(out), {&x}, "softmax",
                       [xi, outer, inner, n](const TensorImpl& y, std::span<const double> g) {
                           double* gx = grad_of(xi);
                           if (!gx) return;
                           for (std::size_t o = 0; o < outer; ++o) {
                               for (std::size_t j = 0; j < inner; ++j) {
                                   const std::size_t base = o * n * inner + j;
                                   double dot = 0.0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                       dot += g[base + i * inner] * y.data[base + i * inner];
                                   }
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const std::size_t idx = base + i * inner;
                                       gx[idx] += y.data[idx] * (g[idx] - dot);
                                   }
                               }
                           }
                       });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1 || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
        x.shape().back() != gamma.dim(0)) {
        throw DimensionError("layer_norm: incompatible shapes x" + shape_str(x.shape()) + " gamma" +
                             shape_str(gamma.shape()) + " beta" + shape_str(beta.shape()));
    }
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t d = gamma.dim(0);
    if (d == 0) throw DimensionError("layer_norm: zero-width rows");
    const std::size_t rows = x.numel() / d;
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    auto in = x.data();
    auto gm = gamma.data();
    auto bt = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += row[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (row[i] - mean) * inv;
            (*xhat)[r * d + i] = h;
            out[r * d + i] = h * gm[i] + bt[i];
        }
    }
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    return make_result(x.shape(), std::move(out), {&x, &gamma, &beta}, "layer_norm",
                       [xi, gi, bi, xhat, inv_std, rows, d](const TensorImpl&, std::span<const double> g) {
                           double* gx = grad_of(xi);
                           double* gg = grad_of(gi);
                           double* gb = grad_of(bi);
                           const auto& h = *xhat;
                           std::vector<double> dh(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* gr = g.data() + r * d;
                               const double* hr = h.data() + r * d;
                               if (gg) for (std::size_t i = 0; i < d; ++i) gg[i] += gr[i] * hr[i];
                               if (gb) for (std::size_t i = 0; i < d; ++i) gb[i] += gr[i];
                               if (!gx) continue;
                               double sum_dh = 0.0, sum_dh_h = 0.0;
                               for (std::size_t i = 0; i < d; ++i) {
                                   dh[i] = gr[i] * gi->data[i];
                                   sum_dh += dh[i];
                                   sum_dh_h += dh[i] * hr[i];
                               }
                               const double k = (*inv_std)[r] / static_cast<double>(d);
                               for (std::size_t i = 0; i < d; ++i) {
                                   gx[r * d + i] += k * (static_cast<double>(d) * dh[i] - sum_dh - hr[i] * sum_dh_h);
                               }
                           }
                       });
}

Tensor dropout(const Tensor& x, double p, bool training, RngState& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1]");
    if (!training || p == 0.0) return x;
    auto keep = std::make_shared<std::vector<double>>(x.numel());
    const double survivor = p >= 1.0 ? 0.0 : 1.0 / (1.0 - p);
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double factor = rng.uniform() < p ? 0.0 : survivor;
        (*keep)[i] = factor;
        out[i] = x.data()[i] * factor;
    }
    auto xi = x.impl();
    return make_result(x.shape(), std::move(out), {&x}, "dropout",
                       [xi, keep](const TensorImpl&, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*keep)[i];
                           }
                       });
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    }
    auto xi = x.impl();
    return make_result(x.shape(), std::move(out), {&x}, "gelu",
                       [xi](const TensorImpl&, std::span<const double> g) {
                           double* gx = grad_of(xi);
                           if (!gx) return;
                           const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               const double v = xi->data[i];
                               const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
                               const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                               gx[i] += g[i] * (cdf + v * pdf);
                           }
                       });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        if (v >= 0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    auto xi = x.impl();
    return make_result(x.shape(), std::move(out), {&x}, "sigmoid",
                       [xi](const TensorImpl& y, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   gx[i] += g[i] * y.data[i] * (1.0 - y.data[i]);
                               }
                           }
                       });
}

Tensor mask_keys(const Tensor& scores, const std::vector<bool>& key_mask) {
    require_rank(scores, 2, "mask_keys");
    const std::size_t rows = scores.dim(0), cols = scores.dim(1);
    if (key_mask.size() != cols) {
        throw DimensionError("mask_keys: mask length " + std::to_string(key_mask.size()) +
                             " vs scores " + shape_str(scores.shape()));
    }
    std::vector<double> out(scores.data().begin(), scores.data().end());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (!key_mask[c]) out[r * cols + c] = kNegInf;
        }
    }
    auto si = scores.impl();
    return make_result(scores.shape(), std::move(out), {&scores}, "mask_keys",
                       [si, key_mask, rows, cols](const TensorImpl&, std::span<const double> g) {
                           double* gs = grad_of(si);
                           if (!gs) return;
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) {
                                   if (key_mask[c]) gs[r * cols + c] += g[r * cols + c];
                               }
                           }
                       });
}

Tensor embedding(const std::vector<std::size_t>& ids, const Tensor& table) {
    require_rank(table, 2, "embedding");
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                                    std::to_string(vocab));
        }
        std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
    }
    auto ti = table.impl();
    return make_result({ids.size(), d}, std::move(out), {&table}, "embedding",
                       [ti, ids, d](const TensorImpl&, std::span<const double> g) {
                           double* gt = grad_of(ti);
                           if (!gt) return;
                           for (std::size_t i = 0; i < ids.size(); ++i) {
                               for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
                           }
                       });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
    std::size_t rows = 0;
    std::vector<const Tensor*> inputs;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(1) != cols) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        rows += p.dim(0);
        inputs.push_back(&p);
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        impls.push_back(p.impl());
    }
    return make_result({rows, cols}, std::move(out), inputs, "concat_rows",
                       [impls](const TensorImpl&, std::span<const double> g) {
                           std::size_t offset = 0;
                           for (const auto& p : impls) {
                               const std::size_t n = p->data.size();
                               if (double* gp = grad_of(p)) {
                                   for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
                               }
                               offset += n;
                           }
                       });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
    std::size_t cols = 0;
    std::vector<const Tensor*> inputs;
    std::vector<ImplPtr> impls;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        cols += p.dim(1);
        inputs.push_back(&p);
        impls.push_back(p.impl());
        widths.push_back(p.dim(1));
    }
    std::vector<double> out(rows * cols);
    std::size_t c0 = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(p.data().data() + r * w, w, out.data() + r * cols + c0);
        }
        c0 += w;
    }
    return make_result({rows, cols}, std::move(out), inputs, "concat_cols",
                       [impls, widths, rows, cols](const TensorImpl&, std::span<const double> g) {
                           std::size_t c0 = 0;
                           for (std::size_t k = 0; k < impls.size(); ++k) {
                               const std::size_t w = widths[k];
                               if (double* gp = grad_of(impls[k])) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + c0 + c];
                                   }
                               }
                               c0 += w;
                           }
                       });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank(x, 2, "slice_rows");
    const std::size_t cols = x.dim(1);
    if (start + count > x.dim(0)) {
        throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(start * cols),
                            x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
    auto xi = x.impl();
    return make_result({count, cols}, std::move(out), {&x}, "slice_rows",
                       [xi, start, cols](const TensorImpl&, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gx[start * cols + i] += g[i];
                           }
                       });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank(x, 2, "slice_cols");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (start + count > cols) {
        throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + shape_str(x.shape()));
    }
    std::vector<double> out(rows * count);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data().data() + r * cols + start, count, out.data() + r * count);
    }
    auto xi = x.impl();
    return make_result({rows, count}, std::move(out), {&x}, "slice_cols",
                       [xi, start, count, rows, cols](const TensorImpl&, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < count; ++c) gx[r * cols + start + c] += g[r * count + c];
                               }
                           }
                       });
}

Tensor mean_rows(const Tensor& x) {
    require_rank(x, 2, "mean_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (rows == 0) throw DimensionError("mean_rows: no rows");
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[c] += x.data()[r * cols + c];
    }
    for (double& v : out) v /= static_cast<double>(rows);
    auto xi = x.impl();
    return make_result({cols}, std::move(out), {&x}, "mean_rows",
                       [xi, rows, cols](const TensorImpl&, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               const double inv = 1.0 / static_cast<double>(rows);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] * inv;
                               }
                           }
                       });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    auto xi = x.impl();
    return make_result({}, {total}, {&x}, "sum", [xi](const TensorImpl&, std::span<const double> g) {
        if (double* gx = grad_of(xi)) {
            for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[0];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto xi = x.impl();
    return make_result(std::move(shape), std::move(out), {&x}, "reshape",
                       [xi](const TensorImpl&, std::span<const double> g) {
                           if (double* gx = grad_of(xi)) {
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                       });
}

Tensor order_free_mean(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("order_free_mean: empty sequence");
    const Shape& shape = parts[0].shape();
    std::vector<const Tensor*> inputs;
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) {
        require_same_shape(parts[0], p, "order_free_mean");
        inputs.push_back(&p);
        impls.push_back(p.impl());
    }
    const std::size_t count = parts.size();
    const std::size_t n = parts[0].numel();
    std::vector<double> out(n);
    std::vector<double> column(count);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < count; ++t) column[t] = parts[t].data()[i];
        // Sorting fixes the summation order; a constant column is returned as is.
        std::sort(column.begin(), column.end());
        if (column.front() == column.back()) {
            out[i] = column.front();
            continue;
        }
        double total = 0.0;
        for (double v : column) total += v;
        out[i] = total / static_cast<double>(count);
    }
    return make_result(shape, std::move(out), inputs, "order_free_mean",
                       [impls, count](const TensorImpl&, std::span<const double> g) {
                           const double inv = 1.0 / static_cast<double>(count);
                           for (const auto& p : impls) {
                               if (double* gp = grad_of(p)) {
                                   for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * inv;
                               }
                           }
                       });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    require_same_shape(logits, targets, "bce_with_logits");
    const std::size_t n = logits.numel();
    if (n == 0) throw DimensionError("bce_with_logits: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.data()[i];
        const double t = targets.data()[i];
        total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    auto li = logits.impl(), ti = targets.impl();
    return make_result({}, {total / static_cast<double>(n)}, {&logits, &targets}, "bce_with_logits",
                       [li, ti, n](const TensorImpl&, std::span<const double> g) {
                           const double k = g[0] / static_cast<double>(n);
                           if (double* gl = grad_of(li)) {
                               for (std::size_t i = 0; i < n; ++i) {
                                   const double z = li->data[i];
                                   const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                                           : std::exp(z) / (1.0 + std::exp(z));
                                   gl[i] += k * (s - ti->data[i]);
                               }
                           }
                           if (double* gt = grad_of(ti)) {
                               for (std::size_t i = 0; i < n; ++i) gt[i] -= k * li->data[i];
                           }
                       });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 1 && logits.rank() != 2) {
        throw DimensionError("cross_entropy: expected [C] or [B,C], got " + shape_str(logits.shape()));
    }
    const std::size_t classes = logits.shape().back();
    const std::size_t rows = logits.rank() == 2 ? logits.dim(0) : 1;
    if (labels.size() != rows || rows == 0) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                             shape_str(logits.shape()));
    }
    auto probs = std::make_shared<std::vector<double>>(logits.numel());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] >= classes) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) + " outside " +
                                    std::to_string(classes) + " classes");
        }
        const double* z = logits.data().data() + r * classes;
        const double mx = *std::max_element(z, z + classes);
        double se = 0.0;
        for (std::size_t c = 0; c < classes; ++c) se += std::exp(z[c] - mx);
        const double lse = mx + std::log(se);
        total += lse - z[labels[r]];
        for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] = std::exp(z[c] - lse);
    }
    auto li = logits.impl();
    return make_result({}, {total / static_cast<double>(rows)}, {&logits}, "cross_entropy",
                       [li, probs, labels, rows, classes](const TensorImpl&, std::span<const double> g) {
                           double* gl = grad_of(li);
                           if (!gl) return;
                           const double k = g[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < classes; ++c) {
                                   const double onehot = c == labels[r] ? 1.0 : 0.0;
                                   gl[r * classes + c] += k * ((*probs)[r * classes + c] - onehot);
                               }
                           }
                       });
}

}  // namespace emoq
