#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "effgcn/common.hpp"

namespace effgcn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Allocator for numeric buffers: 64-byte aligned and default-initialized.
/// The alignment pins the SIMD peeling of every vectorized kernel to the
/// same split regardless of where the heap placed the buffer, which keeps
/// results bitwise reproducible run to run; skipping value-initialization
/// spares a memset for buffers that are fully overwritten.
template <typename T>
struct DefaultInitAlloc {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    DefaultInitAlloc() = default;
    template <typename U>
    DefaultInitAlloc(const DefaultInitAlloc<U>&) {}
    template <typename U>
    struct rebind {
        using other = DefaultInitAlloc<U>;
    };

    T* allocate(std::size_t n) {
        return static_cast<T*>(
            ::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(alignment));
    }
    template <class U>
    void construct(U* p) noexcept(noexcept(::new (static_cast<void*>(p)) U)) {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class A0, class... Args>
    void construct(U* p, A0&& a0, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<A0>(a0), std::forward<Args>(args)...);
    }
    bool operator==(const DefaultInitAlloc&) const { return true; }
    bool operator!=(const DefaultInitAlloc&) const { return false; }
};

/// Dense row-major N-dimensional array without gradient machinery.
template <typename S>
struct Array {
    using Storage = std::vector<S, DefaultInitAlloc<S>>;
    Shape shape;
    Storage data;

    Array() = default;
    Array(Shape s, Storage d) : shape(std::move(s)), data(std::move(d)) {
        require(static_cast<std::int64_t>(data.size()) == shape_numel(shape),
                "array data length must match shape " + shape_str(shape));
    }
    Array(Shape s, std::initializer_list<S> d) : shape(std::move(s)), data(d) {
        require(static_cast<std::int64_t>(data.size()) == shape_numel(shape),
                "array data length must match shape " + shape_str(shape));
    }

    /// Allocated but uninitialized; every element must be written before use.
    static Array uninit(Shape s) {
        auto n = shape_numel(s);
        Array a;
        a.shape = std::move(s);
        a.data.resize(static_cast<std::size_t>(n));
        return a;
    }

    static Array zeros(Shape s) {
        Array a = uninit(std::move(s));
        std::fill(a.data.begin(), a.data.end(), S(0));
        return a;
    }
    static Array full(Shape s, S v) {
        Array a = uninit(std::move(s));
        std::fill(a.data.begin(), a.data.end(), v);
        return a;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool empty() const { return data.empty(); }
    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }
    void release() {
        data.clear();
        data.shrink_to_fit();
    }

    template <typename T>
    Array<T> cast() const {
        Array<T> out = Array<T>::uninit(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

/// Graph recording switch. Inside a NoGradGuard scope, operation results
/// carry no parents or closures, so inference retains nothing.
class GradMode {
public:
    static bool enabled() { return state(); }

private:
    friend class NoGradGuard;
    static bool& state() {
        static thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::state()) { GradMode::state() = false; }
    ~NoGradGuard() { GradMode::state() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename S>
struct TensorNode {
    Array<S> value;
    Array<S> grad;  // allocated on first use
    bool requires_grad = false;
    bool is_leaf = true;
    bool backward_consumed = false;
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode<S>&)> backward_fn;

    Array<S>& ensure_grad() {
        if (grad.empty()) grad = Array<S>::zeros(value.shape);
        return grad;
    }
};

/// Value handle in the reverse-mode graph. Copies share the node.
///
/// Operations record a closure per result node; backward() walks the graph
/// in reverse topological order. Nodes that no gradient can reach carry no
/// closure and keep no parent links, so pure inference retains nothing.
template <typename S>
class Tensor {
public:
    using Node = TensorNode<S>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor leaf(Array<S> value, bool requires_grad = false) {
        auto node = std::make_shared<Node>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return leaf(Array<S>::zeros(std::move(shape)), requires_grad);
    }

    static Tensor scalar(S v, bool requires_grad = false) {
        return leaf(Array<S>({}, {v}), requires_grad);
    }

    /// Result of a recorded operation. The closure is dropped when no parent
    /// can receive gradients.
    static Tensor from_op(Array<S> value, std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn) {
        auto node = std::make_shared<Node>();
        node->value = std::move(value);
        node->is_leaf = false;
        bool needs = false;
        if (GradMode::enabled())
            for (const auto& p : parents) needs = needs || p.requires_grad();
        node->requires_grad = needs;
        if (needs) {
            node->parents.reserve(parents.size());
            for (auto& p : parents) node->parents.push_back(p.node_);
            node->backward_fn = std::move(backward_fn);
        }
        return Tensor(std::move(node));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->value.shape; }
    std::int64_t numel() const { return node_->value.numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    Array<S>& value() const { return node_->value; }
    Array<S>& grad() const { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }

    void zero_grad() const {
        if (!node_->grad.empty())
            std::fill(node_->grad.data.begin(), node_->grad.data.end(), S(0));
    }

    std::shared_ptr<Node> node() const { return node_; }

    /// Same storage under a different shape (no copy).
    Tensor reshaped(Shape shape) const {
        require(shape_numel(shape) == numel(), "reshape must preserve element count");
        Array<S> v(std::move(shape), node_->value.data);
        auto self = *this;
        return from_op(std::move(v), {self}, [self](Node& out) {
            auto& g = self.grad();
            const auto& og = out.grad;
            for (std::int64_t i = 0; i < og.numel(); ++i) g.data[i] += og.data[i];
        });
    }

    /// Reverse-mode sweep from a scalar root. Populates grads of every
    /// reachable tensor with requires_grad; transient grads of interior
    /// nodes are freed as soon as they have been consumed.
    void backward() const {
        require(node_ != nullptr, "backward on an undefined tensor");
        require(numel() == 1, "backward requires a scalar root, got shape " + shape_str(shape()));
        if (node_->backward_consumed)
            throw StateError("backward already ran on this graph; rebuild it before calling again");
        node_->backward_consumed = true;
        if (!node_->requires_grad) return;

        // Reverse post-order DFS = consumers before producers.
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node* parent = node->parents[next++].get();
                if (parent->requires_grad && seen.insert(parent).second)
                    stack.push_back({parent, 0});
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }

        node_->ensure_grad().data[0] = S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
            if (!node->is_leaf) node->grad.release();
        }
    }

private:
    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace effgcn
