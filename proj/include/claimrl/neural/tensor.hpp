#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace claimrl::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One vertex of the recorded computation. Leaves that require grad are
/// parameters; their gradient persists and accumulates across backward passes.
template <typename Scalar>
struct Node {
  Mat<Scalar> value;
  Mat<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  Mat<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad.setZero(value.rows(), value.cols());
    return grad;
  }
};

/// A 2-D value (rows x cols) with an optional gradient. Scalars are 1x1 and
/// vectors are single-column. Copies share the underlying node.
template <typename Scalar>
class Tensor {
 public:
  using Matrix = Mat<Scalar>;
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor parameter(Matrix value) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Tensor(std::move(n));
  }

  static Tensor constant(Matrix value) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    return Tensor(std::move(n));
  }

  static Tensor scalar(Scalar s) {
    Matrix m(1, 1);
    m(0, 0) = s;
    return constant(std::move(m));
  }

  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  Eigen::Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Scalar item() const {
    if (node_->value.size() != 1) throw std::logic_error("item() on a non-scalar tensor");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient, or zeros of the value's shape when nothing has flowed in yet.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  Matrix& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  /// A constant copy cut off from the recorded computation.
  Tensor detach() const { return constant(node_->value); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Builds a recorded result node; parents are kept only if the result needs grad.
template <typename Scalar>
Tensor<Scalar> make_result(Mat<Scalar> value, std::vector<std::shared_ptr<Node<Scalar>>> parents,
                           std::function<void(Node<Scalar>&)> backward_fn) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<Scalar>(std::move(n));
}

/// Reverse-mode sweep from a scalar loss. Interior gradients are reset at the
/// start of every call; leaf (parameter) gradients accumulate.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined()) throw std::logic_error("backward on an undefined tensor");
  if (loss.size() != 1) throw std::logic_error("backward needs a scalar loss");
  if (!loss.requires_grad()) throw std::logic_error("backward on a detached value");

  if (loss.node()->is_leaf()) {
    loss.node()->grad_buffer().array() += Scalar(1);
    return;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Scalar>*> order;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  std::unordered_set<Node<Scalar>*> visited;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf() && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (auto* n : order) n->grad.resize(0, 0);
  loss.node()->grad_buffer().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->grad.size() == 0) continue;
    n->backward_fn(*n);
  }
}

}  // namespace claimrl::nn
