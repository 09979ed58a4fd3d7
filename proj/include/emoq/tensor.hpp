#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emoq {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Counter-based generator: the stream is a pure function of (seed, counter),
/// so a copied state replays the same draws on any platform.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Independent child stream derived from this one.
    RngState fork();
};

/// Independent stream number `stream` of a seed (no overlap between streams).
RngState derive_rng(std::uint64_t seed, std::uint64_t stream);

namespace detail {
struct TensorImpl;

struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const TensorImpl& out, std::span<const double> grad_out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;

    void ensure_grad();
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient slot.
///
/// Copies share storage (handle semantics, like a framework tensor); use
/// clone() for an independent value. Operations that touch a tensor with
/// requires_grad record themselves on the tape so backward() can run.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, RngState& rng, double stddev, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t rank() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double at(std::size_t flat) const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Reverse-mode sweep from a scalar; seeds d(self)/d(self) = 1.
    void backward() const;

    Tensor detach() const;
    Tensor clone() const;
    bool defined() const { return impl_ != nullptr; }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables tape recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

namespace testing {
/// Multiplies the incoming gradient of every `op` node by `factor` during
/// backward. Used to prove the gradient checker catches broken backward code.
void inject_backward_fault(std::string op, double factor);
void clear_backward_fault();
}  // namespace testing

// Forward operations. Each records its backward on the tape when any input
// requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor dropout(const Tensor& x, double p, bool training, RngState& rng);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Sets entries of a [rows, cols] score matrix to -inf where key_mask[col] is false.
Tensor mask_keys(const Tensor& scores, const std::vector<bool>& key_mask);

Tensor embedding(const std::vector<std::size_t>& ids, const Tensor& table);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// Elementwise mean over same-shape tensors whose value does not depend on
/// the order of `parts`, and equals the shared value when all parts agree.
Tensor order_free_mean(const std::vector<Tensor>& parts);

/// Mean binary cross-entropy over all entries, computed from logits.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

}  // namespace emoq
