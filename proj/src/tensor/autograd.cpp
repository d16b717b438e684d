#include "rsyn/autograd.hpp"

#include "rsyn/error.hpp"

namespace rsyn {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void GradientMap::set(const Node* leaf, const Parameter* param, Tensor grad) {
  if (param) {
    auto it = by_param_.find(param);
    if (it == by_param_.end()) {
      by_param_.emplace(param, grad);
    } else {
      for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += grad[i];
    }
  }
  by_node_[leaf] = std::move(grad);
}

const Tensor& GradientMap::of(const Var& leaf) const {
  auto it = by_node_.find(leaf.node());
  if (it == by_node_.end()) throw ContractError("no gradient recorded for this variable (not a leaf?)");
  return it->second;
}

const Tensor* GradientMap::of(const Parameter& param) const {
  auto it = by_param_.find(&param);
  return it == by_param_.end() ? nullptr : &it->second;
}

Var Tape::leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->is_leaf = true;
  n->tape = this;
  leaves_.push_back(n);
  return Var(n);
}

Var Tape::param(const Parameter& p) {
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return it->second;
  Var v = leaf(p.value);
  v.node()->param = &p;
  param_leaves_.emplace(&p, v);
  return v;
}

GradientMap Tape::backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.valid() ? to_string(loss.shape()) : std::string("<null>")));
  }
  if (loss.requires_grad()) {
    loss.node()->grad_buffer()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.backward && !n.grad.empty()) n.backward(n);
    }
  }
  GradientMap out;
  for (const auto& leaf : leaves_) {
    Tensor g = leaf->grad.empty() ? Tensor(leaf->value.shape(), 0.0) : std::move(leaf->grad);
    out.set(leaf.get(), leaf->param, std::move(g));
  }
  nodes_.clear();
  leaves_.clear();
  param_leaves_.clear();
  return out;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(n);
}

std::uint64_t Rng::splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

}  // namespace rsyn
