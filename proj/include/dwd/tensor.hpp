#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwd::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thrown when operand shapes do not conform to an op's rule.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& kind, const Shape& a, const Shape& b);
  ShapeError(const std::string& kind, const std::string& detail);
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph. Leaves are created by the user,
/// interior nodes by ops while a Tape is active.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool grad_touched = false;
  const char* kind = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  double* grad_buffer();
};

/// Dense row-major tensor of doubles. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t i, std::size_t j) const;
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad_touched; }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  /// Leaf copy of the current value, cut from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// Ordered record of interior nodes built while this tape is active on the
/// current thread. A tape can be consumed by backward() exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(NodePtr node);
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<NodePtr>& nodes() const { return nodes_; }

  /// Makes this tape the recording target for the current thread until the
  /// scope is destroyed. Scopes nest.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  /// Suspends recording on the current thread (inference / observations).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

 private:
  friend void backward(Tape& tape, const Tensor& loss);
  std::vector<NodePtr> nodes_;
  bool consumed_ = false;
};

/// Reverse sweep from a scalar loss. Leaf gradients accumulate additively.
void backward(Tape& tape, const Tensor& loss);

namespace detail {
/// Builds an op result. Parents and the backward closure are kept only when
/// a tape is active and some parent requires a gradient.
Tensor make_result(const char* kind, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace dwd::ad
