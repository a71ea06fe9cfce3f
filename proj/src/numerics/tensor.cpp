#include "phr/numerics/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace phr::nn {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t element_count(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape dims, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (element_count(dims) != values.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + to_string(dims));
  }
  node_->dims = std::move(dims);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape dims, bool requires_grad) {
  const std::size_t n = element_count(dims);
  return Tensor(std::move(dims), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape dims, T value, bool requires_grad) {
  const std::size_t n = element_count(dims);
  return Tensor(std::move(dims), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Shape& Tensor<T>::dims() const {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  return node_->dims;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const Shape& d = dims();
  if (axis >= d.size()) throw std::out_of_range("Tensor::dim: axis out of range");
  return d[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return defined() ? node_->value.size() : 0;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  dims();
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  dims();
  return node_->value;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  dims();
  if (!node_->is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient has been computed");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  dims();
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor has " +
                                                std::to_string(numel()) + " elements");
  return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                to_string(dims()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodePtr n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(dims(), node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t(dims(), node_->value, node_->requires_grad);
  if (has_grad()) t.node_->grad = node_->grad;
  return t;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace phr::nn
