#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsit {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::runtime_error {
  public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;  // true when this value is on a differentiable path
    std::vector<T> grad;         // allocated lazily; same numel as data when present
    std::string op;              // producing op, empty for leaves
    std::int64_t node = -1;      // producing node index on the tape
    std::uint64_t tape_gen = 0;  // generation the node index refers to

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

template <typename T>
class Tensor;

// Reverse-mode tape. Ops append nodes in recording order, which is a
// topological order by construction (inputs exist before their consumer).
// backward() walks the node list once, in reverse.
template <typename T>
class Tape {
  public:
    struct Node {
        std::string op;
        std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
        std::shared_ptr<TensorImpl<T>> output;
        std::function<void()> backward;  // reads output->grad, accumulates input grads
    };

    static Tape& active() {
        thread_local Tape tape;
        return tape;
    }

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }
    std::size_t size() const { return nodes_.size(); }
    std::uint64_t generation() const { return generation_; }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    std::int64_t record(Node n) {
        n.output->node = static_cast<std::int64_t>(nodes_.size());
        n.output->tape_gen = generation_;
        nodes_.push_back(std::move(n));
        return nodes_.back().output->node;
    }

    void clear() {
        nodes_.clear();
        ++generation_;
    }

    // Backpropagate from a scalar loss. Each node is visited at most once;
    // nodes that do not feed the loss are skipped via a reachability pass.
    void backward(const std::shared_ptr<TensorImpl<T>>& loss) {
        if (!loss) throw ShapeError("backward: null tensor");
        if (loss->data.size() != 1) {
            throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss->shape));
        }
        loss->ensure_grad();
        loss->grad[0] = T(1);
        if (loss->node < 0) return;  // a leaf: dloss/dloss = 1 and nothing else
        if (loss->tape_gen != generation_) {
            throw std::logic_error("backward: tensor was recorded on a cleared tape");
        }
        const std::size_t start = static_cast<std::size_t>(loss->node);
        std::vector<char> needed(start + 1, 0);
        needed[start] = 1;
        for (std::size_t i = start + 1; i-- > 0;) {
            if (!needed[i]) continue;
            for (const auto& in : nodes_[i].inputs) {
                if (in->node >= 0 && in->tape_gen == generation_) {
                    needed[static_cast<std::size_t>(in->node)] = 1;
                }
            }
        }
        for (std::size_t i = start + 1; i-- > 0;) {
            if (!needed[i]) continue;
            auto& n = nodes_[i];
            if (n.output->grad.empty()) continue;  // no incoming gradient
            n.backward();
        }
    }

  private:
    std::vector<Node> nodes_;
    bool recording_ = true;
    std::uint64_t generation_ = 1;
};

// Pauses tape recording for its scope (optimizer updates, power iterations,
// running statistics, inference).
template <typename T>
class NoGradGuard {
  public:
    NoGradGuard() : prev_(Tape<T>::active().recording()) { Tape<T>::active().set_recording(false); }
    ~NoGradGuard() { Tape<T>::active().set_recording(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Thread-local switch for the forward-pass NaN/Inf scan. Non-finite values
// are treated as a hard error naming the producing op.
inline bool& finite_checks_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->data.assign(shape_numel(shape), value);
        impl->shape = std::move(shape);
        impl->requires_grad = requires_grad;
        return Tensor(std::move(impl));
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (values.size() != shape_numel(shape)) {
            throw ShapeError("Tensor::from: data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = std::move(shape);
        impl->data = std::move(values);
        impl->requires_grad = requires_grad;
        return Tensor(std::move(impl));
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from(Shape{}, {value}, requires_grad);
    }

    bool valid() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t ndim() const { return impl_->shape.size(); }

    T* data() { return impl_->data.data(); }
    const T* data() const { return impl_->data.data(); }
    std::vector<T>& vec() { return impl_->data; }
    const std::vector<T>& vec() const { return impl_->data; }

    T item() const {
        if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool r) {
        impl_->requires_grad = r;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<T>& grad() const { return impl_->grad; }
    std::vector<T>& grad_vec() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    }

    const std::string& op() const { return impl_->op; }

    // value copy with no tape history
    Tensor detach() const {
        auto impl = std::make_shared<TensorImpl<T>>();
        impl->shape = impl_->shape;
        impl->data = impl_->data;
        return Tensor(std::move(impl));
    }

    Tensor clone_with_grad() const {
        auto t = detach();
        t.set_requires_grad(true);
        return t;
    }

    void backward() const { Tape<T>::active().backward(impl_); }

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
inline void check_finite(const TensorImpl<T>& t, const char* opname) {
    if (!finite_checks_enabled()) return;
    for (const T v : t.data) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw NumericError(std::string("non-finite value produced by op '") + opname + "'");
        }
    }
}

// Shared scaffolding for recording one op. The backward body receives the
// produced impl (to read its grad) and the input impls, in declaration order.
template <typename T>
inline Tensor<T> record_op(
    const char* opname, Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
    const std::function<void(const TensorImpl<T>& out,
                             const std::vector<std::shared_ptr<TensorImpl<T>>>& ins)>& backward) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->op = opname;
    check_finite(*impl, opname);
    bool any_grad = false;
    for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
    auto& tape = Tape<T>::active();
    if (any_grad && tape.recording() && backward) {
        impl->requires_grad = true;
        typename Tape<T>::Node node;
        node.op = opname;
        node.inputs.reserve(inputs.size());
        for (const auto& in : inputs) node.inputs.push_back(in.impl());
        node.output = impl;
        node.backward = [impl, ins = node.inputs, backward]() { backward(*impl, ins); };
        tape.record(std::move(node));
    }
    return Tensor<T>(std::move(impl));
}

}  // namespace tsit
