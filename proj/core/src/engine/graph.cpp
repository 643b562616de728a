#include "dbt/engine/graph.hpp"

#include <algorithm>
#include <memory>

#include "common/checks.hpp"

namespace dbt {

template <typename T>
void Graph<T>::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    fail(ErrorKind::kConfig, "variable does not belong to this graph");
  }
}

template <typename T>
Var Graph<T>::input(const std::string& name, bool requires_grad) {
  if (input_index_.contains(name)) fail(ErrorKind::kConfig, "duplicate graph input '" + name + "'");
  Node n{Kind::kInput, name, requires_grad, nullptr, {}, {}, {}};
  nodes_.push_back(std::move(n));
  input_index_[name] = nodes_.size() - 1;
  evaluated_ = tape_live_ = false;
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value, std::string label) {
  Node n{Kind::kConstant, std::move(label), false, nullptr, {}, std::move(value), {}};
  nodes_.push_back(std::move(n));
  evaluated_ = tape_live_ = false;
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::apply(std::shared_ptr<const Op<T>> op, std::vector<Var> inputs, std::string label) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var v : inputs) {
    check(v);
    ids.push_back(v.id);
  }
  Node n{Kind::kOp, std::move(label), false, std::move(op), std::move(ids), {}, {}};
  nodes_.push_back(std::move(n));
  evaluated_ = tape_live_ = false;
  return Var{nodes_.size() - 1};
}

template <typename T>
void Graph<T>::mark_output(const std::string& name, Var v) {
  check(v);
  outputs_[name] = v.id;
}

template <typename T>
std::string Graph<T>::describe(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  std::string s = "node " + std::to_string(v.id);
  switch (n.kind) {
    case Kind::kInput:
      return s + " (input '" + n.name + "')";
    case Kind::kConstant:
      return s + " (constant" + (n.name.empty() ? "" : " '" + n.name + "'") + ")";
    case Kind::kOp:
      return s + " (" + n.op->name() + (n.name.empty() ? "" : " '" + n.name + "'") + ")";
  }
  return s;
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::evaluate(const Bindings<T>& bindings) {
  evaluated_ = tape_live_ = false;
  std::vector<const Tensor<T>*> args;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    n.ctx = {};
    switch (n.kind) {
      case Kind::kInput: {
        auto it = bindings.find(n.name);
        if (it == bindings.end()) fail(ErrorKind::kUnbound, "unbound input '" + n.name + "'");
        n.value = it->second;
        break;
      }
      case Kind::kConstant:
        break;
      case Kind::kOp: {
        args.clear();
        for (auto id : n.inputs) args.push_back(&nodes_[id].value);
        try {
          n.value = n.op->forward(Inputs<T>(args.data(), args.size()), n.ctx);
        } catch (const Error& e) {
          throw Error(e.kind(), describe(Var{i}) + ": " + e.what());
        }
        break;
      }
    }
  }
  evaluated_ = tape_live_ = true;
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, id] : outputs_) out.emplace(name, nodes_[id].value);
  return out;
}

template <typename T>
std::map<std::string, Tensor<T>> Graph<T>::gradients(Var scalar_output) {
  check(scalar_output);
  if (!tape_live_) {
    fail(ErrorKind::kTape, evaluated_ ? "gradient tape already consumed; re-evaluate first"
                                      : "graph has not been evaluated");
  }
  const Tensor<T>& seed_value = nodes_[scalar_output.id].value;
  if (seed_value.shape() != Shape{1}) {
    fail(ErrorKind::kShape, "gradients require a scalar [1] output, got " +
                                shape_to_string(seed_value.shape()) + " at " + describe(scalar_output));
  }

  std::vector<bool> needs(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind == Kind::kInput) {
      needs[i] = n.requires_grad;
    } else if (n.kind == Kind::kOp) {
      needs[i] = std::any_of(n.inputs.begin(), n.inputs.end(), [&](std::size_t id) { return needs[id]; });
    }
  }

  std::vector<Tensor<T>> grads(nodes_.size());
  grads[scalar_output.id] = Tensor<T>::scalar(T(1));
  std::vector<const Tensor<T>*> args;
  for (std::size_t i = scalar_output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.kind != Kind::kOp || !needs[i] || grads[i].null()) continue;
    args.clear();
    auto flags = std::make_unique<bool[]>(n.inputs.size());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      args.push_back(&nodes_[n.inputs[k]].value);
      flags[k] = needs[n.inputs[k]];
    }
    std::vector<Tensor<T>> in_grads;
    try {
      in_grads = n.op->backward(Inputs<T>(args.data(), args.size()), n.value, grads[i], n.ctx,
                                std::span<const bool>(flags.get(), n.inputs.size()));
    } catch (const Error& e) {
      throw Error(e.kind(), describe(Var{i}) + " backward: " + e.what());
    }
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t id = n.inputs[k];
      if (!needs[id]) continue;
      Tensor<T>& g = in_grads.at(k);
      if (g.shape() != nodes_[id].value.shape()) {
        fail(ErrorKind::kShape, describe(Var{i}) + " produced gradient " + shape_to_string(g.shape()) +
                                    " for input of shape " + shape_to_string(nodes_[id].value.shape()));
      }
      if (grads[id].null()) {
        grads[id] = std::move(g);
      } else {
        auto dst = grads[id].data();
        auto src = g.data();
        for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
      }
    }
    grads[i] = {};
  }

  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, id] : input_index_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    out.emplace(name, grads[id].null() ? Tensor<T>::zeros(n.value.shape()) : std::move(grads[id]));
  }
  for (Node& n : nodes_) n.ctx.saved.clear();
  tape_live_ = false;
  return out;
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  check(v);
  if (!evaluated_) fail(ErrorKind::kTape, "graph has not been evaluated");
  return nodes_[v.id].value;
}

template <typename T>
const std::vector<Tensor<T>>& Graph<T>::aux(Var v) const {
  check(v);
  if (!evaluated_) fail(ErrorKind::kTape, "graph has not been evaluated");
  return nodes_[v.id].ctx.aux;
}

template <typename T>
std::vector<std::string> Graph<T>::input_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : input_index_) names.push_back(name);
  return names;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace dbt
