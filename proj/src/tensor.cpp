#include "eretinex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "eretinex/error.hpp"

namespace eretinex {

namespace {

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

thread_local bool t_grad_mode = true;
thread_local FlopCounter* t_counter = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& dims) noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string shape_str(const Shape& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

void set_finite_checks(bool enabled) noexcept { g_finite_checks = enabled; }
bool finite_checks_enabled() noexcept { return g_finite_checks; }

NoGradGuard::NoGradGuard() noexcept : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }
bool grad_mode_enabled() noexcept { return t_grad_mode; }

template <class T>
BasicTensor<T>::BasicTensor(Shape dims, T fill) : node_(std::make_shared<Node>()) {
    node_->values.assign(shape_numel(dims), fill);
    node_->dims = std::move(dims);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> values) : node_(std::make_shared<Node>()) {
    if (shape_numel(dims) != values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "shape " + shape_str(dims) + " needs " +
                                                  std::to_string(shape_numel(dims)) +
                                                  " values, got " + std::to_string(values.size()));
    }
    node_->dims = std::move(dims);
    node_->values = std::move(values);
}

template <class T>
T BasicTensor<T>::item() const {
    if (numel() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_str(dims()));
    }
    return node_->values[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool flag) {
    if (!node_->is_leaf()) {
        throw Error(ErrorCode::InvalidArgument, "requires_grad can only be set on leaf tensors");
    }
    node_->requires_grad = flag;
    return *this;
}

template <class T>
void BasicTensor<T>::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return BasicTensor(node_->dims, node_->values);
}

template <class T>
BasicTensor<T> BasicTensor<T>::make_result(Shape dims, std::vector<T> values,
                                           std::initializer_list<BasicTensor> inputs,
                                           std::function<void(Node&)> backward) {
    return make_result(std::move(dims), std::move(values), std::vector<BasicTensor>(inputs),
                       std::move(backward));
}

template <class T>
BasicTensor<T> BasicTensor<T>::make_result(Shape dims, std::vector<T> values,
                                           const std::vector<BasicTensor>& inputs,
                                           std::function<void(Node&)> backward) {
    if (g_finite_checks) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw Error(ErrorCode::NonFinite, "non-finite value at flat index " +
                                                      std::to_string(i) + " of op output " +
                                                      shape_str(dims));
            }
        }
    }
    BasicTensor out(std::move(dims), std::move(values));
    if (!t_grad_mode) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (!needs) return out;
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(inputs.size());
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    return out;
}

template <class T>
std::vector<T>* grad_sink(typename BasicTensor<T>::Node& parent) {
    if (!parent.requires_grad) return nullptr;
    if (parent.grad.size() != parent.values.size()) parent.grad.assign(parent.values.size(), T(0));
    return &parent.grad;
}

template <class T>
void backward(const BasicTensor<T>& loss) {
    using Node = typename BasicTensor<T>::Node;
    if (!loss.defined() || loss.numel() != 1) {
        throw Error(ErrorCode::InvalidArgument,
                    "backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.dims()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* node : order) {
        if (!node->is_leaf()) node->grad.assign(node->values.size(), T(0));
    }
    Node* root = loss.node().get();
    grad_sink<T>(*root);
    root->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->is_leaf()) continue;
        node->backward(*node);
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

FlopCounter::FlopCounter() : previous_(t_counter) { t_counter = this; }
FlopCounter::~FlopCounter() { t_counter = previous_; }

void FlopCounter::add(std::uint64_t flops) {
    total_ += flops;
    by_scope_[scope_] += flops;
}

FlopScope::FlopScope(std::string_view label) {
    if (t_counter) {
        previous_ = t_counter->scope_;
        t_counter->scope_ = std::string(label);
    }
}

FlopScope::~FlopScope() {
    if (t_counter) t_counter->scope_ = previous_;
}

void count_flops(std::uint64_t flops) noexcept {
    if (t_counter) t_counter->add(flops);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template std::vector<float>* grad_sink<float>(BasicTensor<float>::Node&);
template std::vector<double>* grad_sink<double>(BasicTensor<double>::Node&);
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace eretinex
