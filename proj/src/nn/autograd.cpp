#include "mpa/nn/autograd.hpp"

#include "mpa/error.hpp"

namespace mpa::nn {

std::size_t ParameterStore::add(std::string name, Tensor init) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter '" + name + "'");
  const std::size_t i = values_.size();
  index_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return i;
}

std::optional<std::size_t> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterStore::index(const std::string& name) const {
  auto i = find(name);
  if (!i) throw InvalidInput("unknown parameter '" + name + "'");
  return *i;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

GradientSet zero_gradients(const ParameterStore& store) {
  GradientSet g;
  g.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) g.emplace_back(store.value(i).shape());
  return g;
}

void accumulate(GradientSet& dst, const GradientSet& src) {
  if (dst.size() != src.size()) throw ShapeError("gradient set size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) throw ShapeError("gradient shape mismatch");
    auto d = dst[i].data();
    auto s = src[i].data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(const ParameterStore& store, std::size_t index) {
  if (store_ != nullptr && store_ != &store) {
    throw InvalidInput("a tape can only reference one parameter store");
  }
  store_ = &store;
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.ref = &store.value(index);
  n.param = static_cast<long>(index);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(index, id);
  return {this, id};
}

Var Tape::parameter(const ParameterStore& store, const std::string& name) {
  return parameter(store, store.index(name));
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw InvalidInput("op input belongs to a different tape");
      n.requires_grad = n.requires_grad || requires_grad(v.id);
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw InvalidInput("op input belongs to a different tape");
      n.requires_grad = n.requires_grad || requires_grad(v.id);
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

bool Tape::requires_grad(int id) const {
  return nodes_.at(static_cast<std::size_t>(id)).requires_grad;
}

const Tensor& Tape::value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value(); }

std::vector<float>& Tape::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.empty()) n.grad.assign(n.value().numel(), 0.0f);
  return n.grad;
}

bool Tape::has_grad(int id) const { return !nodes_.at(static_cast<std::size_t>(id)).grad.empty(); }

void Tape::backward(Var loss, float seed) {
  if (!record_) throw InvalidState("backward() on a tape created without recording");
  if (loss.tape != this) throw InvalidInput("loss belongs to a different tape");
  if (value(loss.id).numel() != 1) {
    throw InvalidInput("backward() needs a scalar loss, got shape " + shape_str(value(loss.id).shape()));
  }
  grad(loss.id)[0] += seed;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Tape::accumulate_parameter_grads(GradientSet& into) const {
  // Walk nodes rather than the hash map so the order is fixed.
  for (const Node& n : nodes_) {
    if (n.param < 0 || n.grad.empty()) continue;
    Tensor& dst = into.at(static_cast<std::size_t>(n.param));
    if (dst.numel() != n.grad.size()) throw ShapeError("gradient buffer size mismatch");
    auto d = dst.data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += n.grad[j];
  }
}

}  // namespace mpa::nn
