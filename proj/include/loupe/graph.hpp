#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "loupe/common.hpp"
#include "loupe/tensor.hpp"

namespace loupe {

// A learnable (or auxiliary) tensor with a persistent gradient buffer.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;
};

template <typename S>
class ParamStore {
 public:
  Param<S>& create(const std::string& name, Tensor<S> init, bool trainable = true) {
    if (index_.count(name))
      throw UsageError("param store: duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->grad = Tensor<S>::zeros(init.shape);
    p->value = std::move(init);
    p->trainable = trainable;
    index_[name] = items_.size();
    items_.push_back(std::move(p));
    return *items_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Param<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("param store: unknown parameter '" + name + "'");
    return *items_[it->second];
  }
  const Param<S>& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }

  // Insertion order; training and checkpointing iterate in this order.
  std::vector<Param<S>*> all() {
    std::vector<Param<S>*> out;
    out.reserve(items_.size());
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }
  std::vector<const Param<S>*> all() const {
    std::vector<const Param<S>*> out;
    out.reserve(items_.size());
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }

  std::size_t learnable_count() const {
    std::size_t n = 0;
    for (auto& p : items_)
      if (p->trainable) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : items_) p->grad.fill(S(0));
  }

  std::size_t size() const { return items_.size(); }

 private:
  std::vector<std::unique_ptr<Param<S>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
class Tape;

// Lightweight handle to a tape node.
template <typename S>
struct Value {
  Tape<S>* tape = nullptr;
  std::size_t idx = 0;

  const Tensor<S>& tensor() const;
  bool valid() const { return tape != nullptr; }
};

// Define-by-run reverse-mode tape. Node order is construction order, which
// is a valid topological order, so backward() is a single reverse sweep.
template <typename S>
class Tape {
 public:
  struct Node {
    const char* op = "";
    std::vector<std::size_t> parents;
    Tensor<S> out;
    Tensor<S> grad;  // allocated during backward
    std::function<void(Tape&, std::size_t)> back;
    Param<S>* bound = nullptr;
  };

  explicit Tape(bool grads_enabled = true) : grads_(grads_enabled) {}

  bool grads_enabled() const { return grads_; }

  Value<S> input(Tensor<S> t, const char* name = "input") {
    return make(name, {}, std::move(t), nullptr);
  }

  Value<S> constant(Tensor<S> t) { return make("constant", {}, std::move(t), nullptr); }

  Value<S> param(Param<S>& p) {
    Tensor<S> copy = p.value;
    // node op points at the param's stable name so diagnostics name the tensor
    return make(p.name.c_str(), {}, std::move(copy), &p);
  }

  // Registers a node. The backward hook, if any, is attached afterwards via
  // set_backward (lambdas capture indices, never node pointers).
  Value<S> make(const char* op, std::vector<std::size_t> parents, Tensor<S> out,
                Param<S>* bound) {
    Node n;
    n.op = op;
    n.parents = std::move(parents);
    n.out = std::move(out);
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return Value<S>{this, nodes_.size() - 1};
  }

  void set_backward(Value<S> v, std::function<void(Tape&, std::size_t)> fn) {
    if (grads_) nodes_[v.idx].back = std::move(fn);
  }

  const Tensor<S>& out(std::size_t idx) const { return nodes_[idx].out; }
  Tensor<S>& grad_buf(std::size_t idx) { return nodes_[idx].grad; }
  const Node& node(std::size_t idx) const { return nodes_[idx]; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Accumulates into ancestor node grads and into bound Param::grad buffers.
  void backward(Value<S> root, const Tensor<S>& upstream) {
    if (!grads_)
      throw UsageError("backward: tape was built with gradients disabled");
    if (nodes_.empty()) throw UsageError("backward: no forward pass has been run");
    if (root.tape != this || root.idx >= nodes_.size())
      throw UsageError("backward: root does not belong to this tape");
    if (!nodes_[root.idx].out.same_shape(upstream))
      throw ShapeError("backward: upstream " + upstream.shape_str() +
                       " does not match root output " + nodes_[root.idx].out.shape_str());

    // Mark ancestors so each contributing node is visited exactly once.
    std::vector<char> reach(root.idx + 1, 0);
    reach[root.idx] = 1;
    for (std::size_t i = root.idx + 1; i-- > 0;) {
      if (!reach[i]) continue;
      for (std::size_t p : nodes_[i].parents) reach[p] = 1;
    }

    for (std::size_t i = 0; i <= root.idx; ++i) {
      if (reach[i])
        nodes_[i].grad = Tensor<S>::zeros(nodes_[i].out.shape);
    }
    nodes_[root.idx].grad = upstream;

    for (std::size_t i = root.idx + 1; i-- > 0;) {
      if (!reach[i]) continue;
      auto& n = nodes_[i];
      if (n.back) n.back(*this, i);
      if (n.bound) {
        auto& pg = n.bound->grad;
        for (std::size_t k = 0; k < pg.numel(); ++k) pg.data[k] += n.grad.data[k];
      }
    }
  }

  // Gradient w.r.t. an input/leaf after backward.
  const Tensor<S>& grad(Value<S> v) const {
    if (v.tape != this || v.idx >= nodes_.size())
      throw UsageError("grad: value does not belong to this tape");
    if (nodes_[v.idx].grad.numel() == 0)
      throw UsageError("grad: backward has not touched this node");
    return nodes_[v.idx].grad;
  }

  // Name of the first node (construction order) with a non-finite output.
  std::string first_nonfinite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].out.all_finite())
        return std::string(nodes_[i].op) + "#" + std::to_string(i);
    return {};
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
  bool grads_;
};

template <typename S>
const Tensor<S>& Value<S>::tensor() const {
  return tape->out(idx);
}

}  // namespace loupe
