// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation. A Graph records every op as it
// is evaluated; backward() walks the records in reverse insertion order and
// returns the parameter gradients without touching the parameters, so several
// graphs may be differentiated concurrently against shared weights.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcwe/tensor.hpp"

namespace vcwe::ad {

/// Named trainable tensor. Row-sparse parameters are lookup tables whose
/// gradients and optimizer updates touch only the rows read by a graph.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool row_sparse = false)
      : name_(std::move(name)), value_(std::move(value)), row_sparse_(row_sparse) {}

  const std::string& name() const noexcept { return name_; }
  Tensor& value() noexcept { return value_; }
  const Tensor& value() const noexcept { return value_; }
  bool row_sparse() const noexcept { return row_sparse_; }

 private:
  std::string name_;
  Tensor value_;
  bool row_sparse_;
};

using RowGrads = std::map<std::size_t, std::vector<double>>;

struct DenseGrad {
  Parameter* param;
  Tensor grad;
};

struct SparseGrad {
  Parameter* param;
  RowGrads rows;
};

/// Gradients of one backward pass, ordered by first use in the graph.
class Gradients {
 public:
  std::vector<DenseGrad> dense;
  std::vector<SparseGrad> sparse;

  Tensor& dense_for(Parameter& p);
  RowGrads& sparse_for(Parameter& p);

  const Tensor* find_dense(const Parameter& p) const;
  const RowGrads* find_sparse(const Parameter& p) const;

  /// Full-shape gradient for `p` (zeros where untouched).
  Tensor to_dense(const Parameter& p) const;

  double squared_norm() const;
  void scale(double factor);
  /// Rescales so the global L2 norm is at most max_norm; returns the pre-clip norm.
  double clip_global_norm(double max_norm);
};

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;       // dense parameter leaf
  Parameter* table = nullptr;       // row lookup leaf
  std::vector<std::size_t> rows;    // rows read from `table`
  const char* op = "";

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

class Graph;

/// Handle to a node; cheap to copy, valid while its Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, Node* node) : graph_(graph), node_(node) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  Graph& graph() const { return *graph_; }
  Node* node() const { return node_; }
  bool valid() const { return node_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  Node* node_ = nullptr;
};

#ifdef NDEBUG
inline constexpr bool kCheckFiniteDefault = false;
#else
inline constexpr bool kCheckFiniteDefault = true;
#endif

class Graph {
 public:
  explicit Graph(bool check_finite = kCheckFiniteDefault) : check_finite_(check_finite) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf holding a copy of the parameter's current value.
  Var parameter(Parameter& p);
  /// [rows.size(), D] gather from a 2-D parameter; gradients stay row-sparse.
  Var lookup(Parameter& table, std::span<const std::size_t> rows);

  /// Records an op output. `inputs` decide whether the node needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             std::function<void(Node&)> backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, std::function<void(Node&)> backward);

  /// Throws ShapeError unless `loss` holds exactly one element.
  Gradients backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool check_finite() const noexcept { return check_finite_; }

 private:
  Node& push(const char* op, Tensor value);

  std::deque<Node> nodes_;
  bool check_finite_;
};

}  // namespace vcwe::ad
