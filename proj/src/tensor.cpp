#include "vtunet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "vtunet/error.hpp"

namespace vtunet {

namespace {

thread_local GradTape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_serial{1};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                             " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::values() const {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_values() {
    if (!impl_) throw DimensionError("use of an undefined tensor");
    if (impl_->tape_serial != 0) throw TapeError("op results are immutable");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() needs a one-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

Tensor Tensor::detach() const { return from(shape(), impl_->data, false); }

Tensor Gradients::get(const Tensor& t) const {
    auto it = grads_.find(t.id());
    if (it == grads_.end()) throw TapeError("no gradient recorded for tensor of shape " + shape_str(t.shape()));
    return Tensor::from(t.shape(), it->second);
}

bool GradSink::needs(std::size_t i) const { return inputs_.at(i)->requires_grad; }

std::span<double> GradSink::buffer(std::size_t i) {
    const auto& impl = inputs_.at(i);
    return tape_.grad_buffer(impl.get(), impl->data.size());
}

GradTape::GradTape() : serial_(g_next_serial.fetch_add(1)), previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() {
    if (g_active_tape == this) g_active_tape = previous_;
}

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn backward) {
    if (consumed_) throw TapeError("tape already consumed by backward()");
    Entry e;
    e.inputs.reserve(inputs.size());
    for (auto& t : inputs) e.inputs.push_back(t.impl());
    e.output = output.impl();
    e.backward = std::move(backward);
    entries_.push_back(std::move(e));
}

std::vector<double>& GradTape::grad_buffer(const detail::TensorImpl* impl, std::size_t n) {
    auto& buf = grads_[impl];
    if (buf.empty()) buf.assign(n, 0.0);
    return buf;
}

Gradients GradTape::backward(const Tensor& root) {
    if (consumed_) throw TapeError("backward() called twice on the same tape; re-run the forward pass");
    if (!root.defined()) throw TapeError("backward() on an undefined tensor");
    if (root.numel() != 1) throw TapeError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
    if (root.impl()->tape_serial != serial_) throw TapeError("backward() root was not produced on this tape");
    consumed_ = true;

    grads_.clear();
    grad_buffer(root.id(), 1)[0] = 1.0;

    std::unordered_set<const detail::TensorImpl*> produced;
    for (const auto& e : entries_) produced.insert(e.output.get());

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        auto found = grads_.find(it->output.get());
        if (found == grads_.end()) continue;  // does not reach the root
        std::vector<double> grad_out = std::move(found->second);
        grads_.erase(found);
        GradSink sink(*this, it->inputs);
        it->backward(grad_out, sink);
    }

    Gradients out;
    for (auto& [impl, g] : grads_) {
        if (produced.count(impl) == 0 && impl->requires_grad) out.grads_.emplace(impl, std::move(g));
    }
    grads_.clear();
    entries_.clear();
    if (g_active_tape == this) g_active_tape = previous_;
    return out;
}

TapePause::TapePause() : saved_(g_active_tape) { g_active_tape = nullptr; }

TapePause::~TapePause() { g_active_tape = saved_; }

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   BackwardFn backward) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in result");
    }
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    GradTape* tape = GradTape::active();
    if (tape == nullptr) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (!any) return out;
    auto impl = out.impl();
    impl->requires_grad = true;
    impl->tape_serial = tape->serial();
    tape->record(out, std::move(inputs), std::move(backward));
    return out;
}

}  // namespace vtunet
