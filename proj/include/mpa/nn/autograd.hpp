#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpa/nn/tensor.hpp"

namespace mpa::nn {

// Named learnable tensors. Indices are stable and define checkpoint order.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;  // throws InvalidInput

  std::size_t total_elements() const;
  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One gradient buffer per parameter, in store order.
using GradientSet = std::vector<Tensor>;
GradientSet zero_gradients(const ParameterStore& store);
// dst[i] += src[i]
void accumulate(GradientSet& dst, const GradientSet& src);

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode autodiff recorder. Nodes are kept in creation order and
// backward() visits them in exactly the reverse order, so gradients are
// reproducible bit for bit.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  // With record = false no backward closures are stored (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  // The parameter is referenced, not copied; at most one node per index.
  Var parameter(const ParameterStore& store, std::size_t index);
  Var parameter(const ParameterStore& store, const std::string& name);
  // Records an op output. The closure is kept only if recording is on and
  // at least one input needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(int id) const;
  // Gradient buffer of a node, allocated as zeros on first access.
  std::vector<float>& grad(int id);
  bool has_grad(int id) const;
  bool requires_grad(int id) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d loss = seed and propagates. Throws InvalidInput unless `loss`
  // is a single-element tensor.
  void backward(Var loss, float seed = 1.0f);

  // Adds the gradient of every parameter node into `into` (store order).
  void accumulate_parameter_grads(GradientSet& into) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    std::vector<float> grad;
    BackwardFn backward;
    long param = -1;
    bool requires_grad = false;
    const Tensor& value() const { return ref ? *ref : owned; }
  };

  bool record_;
  std::deque<Node> nodes_;
  const ParameterStore* store_ = nullptr;
  std::unordered_map<std::size_t, int> param_nodes_;
};

}  // namespace mpa::nn
