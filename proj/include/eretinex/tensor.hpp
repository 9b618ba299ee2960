#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eretinex {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& dims) noexcept;
std::string shape_str(const Shape& dims);

// When enabled, every forward op verifies its output is finite and throws
// ErrorCode::NonFinite otherwise. On by default in debug builds.
void set_finite_checks(bool enabled) noexcept;
bool finite_checks_enabled() noexcept;

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
  public:
    NoGradGuard() noexcept;
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

bool grad_mode_enabled() noexcept;

/// Dense row-major tensor with reverse-mode gradient tracking.
///
/// A BasicTensor is a handle: copies share the same node, so a parameter
/// held by a layer and by the model's parameter list is one object. Ops
/// never mutate their inputs. Leaves accumulate gradients across backward()
/// calls until zero_grad(); interior nodes get fresh gradients each call.
///
/// The element type is the compute precision: `float` for training and
/// inference, `double` for finite-difference gradient checks.
template <class T>
class BasicTensor {
  public:
    using value_type = T;

    struct Node {
        Shape dims;
        std::vector<T> values;
        std::vector<T> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        // Reads this node's grad and accumulates into the parents' grads.
        std::function<void(Node&)> backward;

        bool is_leaf() const noexcept { return !backward; }
    };

    BasicTensor() = default;
    explicit BasicTensor(Shape dims, T fill = T(0));
    BasicTensor(Shape dims, std::vector<T> values);

    static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& dims() const { return node_->dims; }
    std::size_t rank() const { return node_->dims.size(); }
    std::size_t dim(std::size_t axis) const { return node_->dims.at(axis); }
    std::size_t numel() const { return node_->values.size(); }

    std::span<const T> values() const { return node_->values; }
    // Direct write access, for initializers and optimizers acting on leaves.
    std::span<T> mutable_values() { return node_->values; }
    T item() const;

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    BasicTensor& set_requires_grad(bool flag);

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad; }
    void zero_grad();

    // New leaf holding a copy of the values, outside any graph.
    BasicTensor detach() const;

    template <class U>
    BasicTensor<U> cast() const {
        std::vector<U> out(node_->values.begin(), node_->values.end());
        return BasicTensor<U>(node_->dims, std::move(out));
    }

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

    // Builds an op result. If no input requires a gradient (or grad mode is
    // off) the result is a plain leaf and the backward closure is dropped.
    static BasicTensor make_result(Shape dims, std::vector<T> values,
                                   std::initializer_list<BasicTensor> inputs,
                                   std::function<void(Node&)> backward);
    static BasicTensor make_result(Shape dims, std::vector<T> values,
                                   const std::vector<BasicTensor>& inputs,
                                   std::function<void(Node&)> backward);

  private:
    std::shared_ptr<Node> node_;
};

// Returns the parent's gradient buffer (allocating zeros on first use), or
// nullptr when the parent does not take gradients.
template <class T>
std::vector<T>* grad_sink(typename BasicTensor<T>::Node& parent);

// Back-propagates from a scalar loss into every reachable leaf that
// requires a gradient.
template <class T>
void backward(const BasicTensor<T>& loss);

using Tensor = BasicTensor<float>;
using TensorF64 = BasicTensor<double>;

/// Counts floating-point operations issued by tensor ops on this thread
/// while alive. Convention: 2 per multiply-accumulate in convolutions and
/// linear maps, 1 per bias add, 1 per element for elementwise ops and
/// activations, 0 for pure data movement (reshape, concat, upsample).
class FlopCounter {
  public:
    FlopCounter();
    ~FlopCounter();
    FlopCounter(const FlopCounter&) = delete;
    FlopCounter& operator=(const FlopCounter&) = delete;

    std::uint64_t total() const noexcept { return total_; }
    const std::map<std::string, std::uint64_t>& by_scope() const noexcept { return by_scope_; }

    void add(std::uint64_t flops);

  private:
    friend class FlopScope;
    FlopCounter* previous_;
    std::uint64_t total_ = 0;
    std::map<std::string, std::uint64_t> by_scope_;
    std::string scope_ = "other";
};

// Attributes flops to `label` in the active counter while alive.
class FlopScope {
  public:
    explicit FlopScope(std::string_view label);
    ~FlopScope();
    FlopScope(const FlopScope&) = delete;
    FlopScope& operator=(const FlopScope&) = delete;

  private:
    std::string previous_;
};

void count_flops(std::uint64_t flops) noexcept;

}  // namespace eretinex
