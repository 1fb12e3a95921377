#include "dwd/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dwd::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& kind, const Shape& a, const Shape& b)
    : std::invalid_argument(kind + ": shape mismatch " + shape_str(a) + " vs " +
                            shape_str(b)) {}

ShapeError::ShapeError(const std::string& kind, const std::string& detail)
    : std::invalid_argument(kind + ": " + detail) {}

double* Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  grad_touched = true;
  return grad.data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor", "shape " + shape_str(shape) + " needs " +
                                   std::to_string(numel(shape)) + " values, got " +
                                   std::to_string(data.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw ShapeError("at", "expects rank 2, got " + shape_str(shape()));
  return node_->value[i * node_->shape[1] + j];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item", "expects one element, got " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad_touched = false;
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(NodePtr node) { nodes_.push_back(std::move(node)); }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::Pause::Pause() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::Pause::~Pause() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void backward(Tape& tape, const Tensor& loss) {
  if (tape.consumed_) throw std::logic_error("backward: tape already consumed");
  if (loss.size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  }
  tape.consumed_ = true;
  Node* root = loss.node();
  if (!root->requires_grad) {
    tape.nodes_.clear();
    return;
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad_touched && n.backward) n.backward(n);
  }
  // Interior nodes are no longer needed; dropping closures releases the graph.
  for (auto& n : tape.nodes_) {
    n->backward = nullptr;
    n->parents.clear();
  }
  tape.nodes_.clear();
}

namespace detail {

Tensor make_result(const char* kind, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = std::move(shape);
  node->value = std::move(value);
  Tape* tape = Tape::active();
  bool needs = false;
  if (tape) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace dwd::ad
