// SPDX-License-Identifier: Apache-2.0
#include "vcwe/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "vcwe/error.hpp"

namespace vcwe::ad {

// ---------------------------------------------------------------- Gradients

Tensor& Gradients::dense_for(Parameter& p) {
  for (auto& g : dense)
    if (g.param == &p) return g.grad;
  dense.push_back({&p, Tensor(p.value().shape())});
  return dense.back().grad;
}

RowGrads& Gradients::sparse_for(Parameter& p) {
  for (auto& g : sparse)
    if (g.param == &p) return g.rows;
  sparse.push_back({&p, {}});
  return sparse.back().rows;
}

const Tensor* Gradients::find_dense(const Parameter& p) const {
  for (const auto& g : dense)
    if (g.param == &p) return &g.grad;
  return nullptr;
}

const RowGrads* Gradients::find_sparse(const Parameter& p) const {
  for (const auto& g : sparse)
    if (g.param == &p) return &g.rows;
  return nullptr;
}

Tensor Gradients::to_dense(const Parameter& p) const {
  Tensor out(p.value().shape());
  if (const auto* d = find_dense(p)) out += *d;
  if (const auto* s = find_sparse(p)) {
    const std::size_t width = p.value().dim(1);
    for (const auto& [row, g] : *s)
      for (std::size_t j = 0; j < width; ++j) out[row * width + j] += g[j];
  }
  return out;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& g : dense)
    for (double v : g.grad.data()) total += v * v;
  for (const auto& g : sparse)
    for (const auto& [row, values] : g.rows)
      for (double v : values) total += v * v;
  return total;
}

void Gradients::scale(double factor) {
  for (auto& g : dense)
    for (double& v : g.grad.data()) v *= factor;
  for (auto& g : sparse)
    for (auto& [row, values] : g.rows)
      for (double& v : values) v *= factor;
}

double Gradients::clip_global_norm(double max_norm) {
  const double norm = std::sqrt(squared_norm());
  if (norm > max_norm && norm > 0.0) scale(max_norm / norm);
  return norm;
}

// --------------------------------------------------------------------- Node

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

// -------------------------------------------------------------------- Graph

Node& Graph::push(const char* op, Tensor value) {
  if (check_finite_ && !value.all_finite())
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  Node& node = nodes_.emplace_back();
  node.value = std::move(value);
  node.op = op;
  return node;
}

Var Graph::constant(Tensor value) { return {this, &push("constant", std::move(value))}; }

Var Graph::parameter(Parameter& p) {
  Node& node = push("parameter", p.value());
  node.param = &p;
  node.requires_grad = true;
  return {this, &node};
}

Var Graph::lookup(Parameter& table, std::span<const std::size_t> rows) {
  const Tensor& src = table.value();
  if (src.rank() != 2) throw ShapeError("lookup needs a 2-D table, got " + shape_string(src.shape()));
  const std::size_t width = src.dim(1);
  Tensor out(Shape{rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= src.dim(0))
      throw ShapeError("lookup row " + std::to_string(rows[i]) + " outside table " + table.name());
    std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  Node& node = push("lookup", std::move(out));
  node.table = &table;
  node.rows.assign(rows.begin(), rows.end());
  node.requires_grad = true;
  return {this, &node};
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> inputs,
                  std::function<void(Node&)> backward) {
  Node& node = push(op, std::move(value));
  for (const Var& in : inputs) {
    if (&in.graph() != this) throw StateError(std::string("op '") + op + "' mixes nodes of different graphs");
    node.requires_grad = node.requires_grad || in.node()->requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return {this, &node};
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                  std::function<void(Node&)> backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Gradients Graph::backward(Var loss) {
  if (&loss.graph() != this) throw StateError("loss belongs to another graph");
  if (loss.size() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  loss.node()->grad_buffer()[0] = 1.0;

  // Nodes are stored in evaluation order, which is a topological order.
  const Node* const loss_node = loss.node();
  auto it = nodes_.rbegin();
  while (&*it != loss_node) ++it;
  for (; it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }

  Gradients grads;
  for (auto& n : nodes_) {
    if (n.grad.size() == 0) continue;
    if (n.param) {
      grads.dense_for(*n.param) += n.grad;
    } else if (n.table) {
      auto& rows = grads.sparse_for(*n.table);
      const std::size_t width = n.value.dim(1);
      for (std::size_t i = 0; i < n.rows.size(); ++i) {
        auto& acc = rows[n.rows[i]];
        if (acc.empty()) acc.assign(width, 0.0);
        for (std::size_t j = 0; j < width; ++j) acc[j] += n.grad[i * width + j];
      }
    }
  }
  return grads;
}

}  // namespace vcwe::ad
