#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vtunet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    // Serial of the tape that produced this tensor; 0 for leaves.
    std::uint64_t tape_serial = 0;
};

}  // namespace detail

/// Dense row-major array of doubles. A Tensor is a cheap handle: copies
/// share storage. Ops never modify their inputs; only leaves (parameters)
/// may be updated in place, and only between forward passes.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    /// Writable view of a leaf tensor. Throws TapeError for op results.
    std::span<double> mutable_values();
    double item() const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    /// True for tensors not produced by a recorded op.
    bool is_leaf() const { return impl_ && impl_->tape_serial == 0; }

    /// Leaf copy of the values, outside any tape.
    Tensor detach() const;

    const detail::TensorImpl* id() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Gradients of a scalar with respect to the requires_grad leaves it
/// depends on.
class Gradients {
public:
    bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
    /// Gradient of `t` as a tensor of the same shape. Throws TapeError when
    /// `t` received no gradient.
    Tensor get(const Tensor& t) const;
    std::size_t size() const { return grads_.size(); }

private:
    friend class GradTape;
    std::unordered_map<const detail::TensorImpl*, std::vector<double>> grads_;
};

/// Accumulator handed to an op's backward function.
class GradSink {
public:
    /// Whether input `i` of the op takes a gradient.
    bool needs(std::size_t i) const;
    /// Zero-initialised (on first use) gradient buffer for input `i`.
    std::span<double> buffer(std::size_t i);

private:
    friend class GradTape;
    GradSink(class GradTape& tape, const std::vector<std::shared_ptr<detail::TensorImpl>>& inputs)
        : tape_(tape), inputs_(inputs) {}
    class GradTape& tape_;
    const std::vector<std::shared_ptr<detail::TensorImpl>>& inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradSink& sink)>;

/// Records differentiable ops executed on this thread while alive.
/// Build once, consume once: `backward` may be called a single time.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    /// Reverse pass from a one-element tensor produced on this tape.
    Gradients backward(const Tensor& root);

    std::size_t size() const { return entries_.size(); }
    std::uint64_t serial() const { return serial_; }

    static GradTape* active();

    /// Records an op result. Inputs that do not require grad are kept but
    /// receive no buffer.
    void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn backward);

private:
    friend class GradSink;
    friend class TapePause;

    struct Entry {
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        std::shared_ptr<detail::TensorImpl> output;
        BackwardFn backward;
    };

    std::vector<double>& grad_buffer(const detail::TensorImpl* impl, std::size_t n);

    std::vector<Entry> entries_;
    std::unordered_map<const detail::TensorImpl*, std::vector<double>> grads_;
    std::uint64_t serial_;
    GradTape* previous_;
    bool consumed_ = false;
};

/// Suspends recording on this thread for its lifetime.
class TapePause {
public:
    TapePause();
    ~TapePause();
    TapePause(const TapePause&) = delete;
    TapePause& operator=(const TapePause&) = delete;

private:
    GradTape* saved_;
};

/// Builds the result tensor of an op and, when a tape is active and some
/// input requires grad, records its backward function.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

}  // namespace vtunet
