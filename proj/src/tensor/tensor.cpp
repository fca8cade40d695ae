#include "steerq/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace steerq {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size())) throw std::out_of_range("Tensor::dim");
  return s[i];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("undefined tensor");
  node_->requires_grad = on;
}

std::span<const double> Tensor::grad() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value); }

Tensor Tensor::clone() const {
  Tensor t(shape(), node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (Tensor& t : inputs) out.node_->parents.push_back(std::move(t.node_));
  out.node_->backward = std::move(backward);
  return out;
}

void Tensor::backward() const {
  if (!node_) throw std::logic_error("backward on undefined tensor");
  if (node_->value.size() != 1) throw std::logic_error("backward needs a single-element tensor");
  if (!node_->requires_grad) throw std::logic_error("backward on a tensor without history");

  // iterative post-order DFS gives a topological order
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace steerq
