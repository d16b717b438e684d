#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rsyn/tensor.hpp"

namespace rsyn {

// A named learnable array. Models own Parameters; a Tape only borrows them.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows back into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Tape* tape = nullptr;
  const Parameter* param = nullptr;
  bool requires_grad = false;
  bool is_leaf = false;

  // Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
};

// Handle to a node in the computation. Copying a Var shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Gradients produced by Tape::backward for every requires_grad leaf.
class GradientMap {
 public:
  void set(const Node* leaf, const Parameter* param, Tensor grad);

  // Gradient of a leaf Var; throws ContractError for non-leaves.
  const Tensor& of(const Var& leaf) const;
  // nullptr if the parameter was not part of the tape.
  const Tensor* of(const Parameter& param) const;

  const std::map<const Parameter*, Tensor>& parameters() const { return by_param_; }
  std::size_t size() const { return by_node_.size(); }

 private:
  std::map<const Node*, Tensor> by_node_;
  std::map<const Parameter*, Tensor> by_param_;
};

// Records nodes in construction order while gradients are wanted. Nodes built
// from inputs that belong to no tape (constants, no-grad forward) are not
// recorded, so an eval-mode forward keeps no intermediates alive.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that requires grad.
  Var leaf(Tensor value);
  // Leaf bound to a parameter; repeated calls return the same node.
  Var param(const Parameter& p);

  // Reverse-mode sweep from a scalar loss. Visits recorded nodes once each in
  // reverse construction order, then releases the graph.
  GradientMap backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  void record(const std::shared_ptr<Node>& node) { nodes_.push_back(node); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  std::vector<std::shared_ptr<Node>> leaves_;
  std::map<const Parameter*, Var> param_leaves_;
};

// A value outside any tape.
Var constant(Tensor value);

// Seeded generator: std::mt19937_64 keyed through splitmix64 so that derived
// streams (per step, per batch item) are decorrelated yet reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static std::uint64_t splitmix64(std::uint64_t x);
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  // Uniform on [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

namespace ops {

// [..., m, k] x [..., k, n]; leading extents agree or broadcast from 1.
Var matmul(const Var& a, const Var& b);
// a x b^T over the last two axes: [..., m, k] x [..., n, k] -> [..., m, n].
Var matmul_bt(const Var& a, const Var& b);

// Elementwise sum where b's shape equals a's shape or a trailing suffix of it.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);  // same shapes
Var mul(const Var& a, const Var& b);  // same shapes
Var scale(const Var& x, double s);

Var relu(const Var& x);
Var softplus(const Var& x);
// Inverted dropout; identity when !training or p == 0.
Var dropout(const Var& x, double p, Rng& rng, bool training);

Var softmax_lastdim(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& axes);

Var sum(const Var& x);
Var mean(const Var& x);
// (1/n) sum (pred - target)^2 over all elements; shapes must match.
Var mse_loss(const Var& pred, const Var& target);

}  // namespace ops

// Plain-value helpers shared by the ops and their tests.
double softplus_value(double x);
Tensor permute_values(const Tensor& x, const std::vector<std::size_t>& axes);

}  // namespace rsyn
