// core/include/biaslattice/graph.hpp
//
// Define-by-run reverse-mode differentiation tape. A Graph is rebuilt for
// every forward pass (recurrent nets have data-dependent depth), nodes are
// appended in topological order by construction, and backward() walks the
// tape in reverse accumulating gradients additively across fan-out.
//
// Restrictions that keep the tape small and the backward kernels obvious:
// no broadcasting (add/mul require identical shapes; scale covers the scalar
// case), concat and slice operate along axis 0 only. Shape-only annotations
// (stack_rows, row) reuse the concat/slice kernels since the data layout is
// row-major either way.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "biaslattice/tensor.hpp"

namespace biaslattice {

enum class Op {
  kLeaf,     // external parameter tensor
  kConst,    // graph-owned constant
  kMatmul,
  kAdd,
  kMul,      // elementwise
  kTanh,
  kSigmoid,
  kSoftmax,  // over a given axis
  kConcat,   // along axis 0
  kSlice,    // along axis 0
  kSum,      // full reduction to a scalar
  kScale,    // by a host constant
  kCustom,   // composite op with caller-supplied backward
};

const char* op_name(Op op);

struct Value {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Backward hook for kCustom nodes: accumulate d(out)/d(input) * out_grad into
// each input gradient span. Spans are pre-allocated and may already hold
// contributions from other consumers.
using CustomBackward =
    std::function<void(std::span<const double> out_grad, std::span<std::span<double>> input_grads)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf bound to an external tensor; gradients accumulate into t.grad.
  // Repeated calls with the same tensor return the same node.
  Value param(const Tensor& t);
  Value constant(Tensor t);
  Value constant(std::vector<int64_t> shape, std::vector<double> data);
  Value zeros(std::vector<int64_t> shape);

  // matmul dispatches on ranks: (m,k)x(k,n)->(m,n); (m,k)x(k)->(m);
  // (k)x(k,n)->(n); (k)x(k)->(1).
  Value matmul(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value tanh(Value x);
  Value sigmoid(Value x);
  Value softmax(Value x, int axis);
  Value concat(std::span<const Value> parts, int axis = 0);
  // Concatenate rank-1 parts and annotate the result with `shape`
  // (same numel); used to stack vectors into matrices and lattices.
  Value stack(std::span<const Value> parts, std::vector<int64_t> shape);
  Value stack_rows(std::span<const Value> rows);
  Value slice(Value x, int axis, int64_t start, int64_t len);
  Value row(Value m, int64_t i);  // (r,c) -> (c)
  Value sum(Value x);
  Value scale(Value x, double s);
  Value custom(std::string name, std::vector<Value> inputs, Tensor out, CustomBackward backward);

  // Fills gradients of every requires_grad tensor reachable from `loss`.
  // loss must be a scalar node of this graph.
  void backward(Value loss);

  const Tensor& value(Value v) const;
  // Node-level gradient (valid after backward; empty if the node was not
  // reached or does not require grad).
  std::span<const double> node_grad(Value v) const;
  size_t size() const { return nodes_.size(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Op op;
    std::vector<int32_t> inputs;
    Tensor value;
    std::vector<double> grad;
    const Tensor* bound = nullptr;  // kLeaf only
    bool needs_grad = false;
    int axis = 0;
    int64_t start = 0;
    int64_t length = 0;
    double alpha = 1.0;
    CustomBackward custom_backward;
    std::string name;
  };

  Value push(Node n);
  const Node& at(Value v) const;
  Node& at_mut(Value v);
  void check_same_shape(const char* op, Value a, Value b) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int32_t> bound_ids_;
};

// Generic dispatcher over the op vocabulary above; the typed builders are
// the primary API, this exists for uniform-surface tests and tooling.
struct OpAttrs {
  int axis = 0;
  int64_t start = 0;
  int64_t length = 0;
  double alpha = 1.0;
};
Value forward_op(Graph& g, Op kind, std::span<const Value> inputs, const OpAttrs& attrs = {});

// Max over all coordinates of all `params` of
//   |analytic - central_difference| / max(1, |analytic|)
// where analytic comes from one backward pass of the loss built by
// `build_loss` and the central differences re-run the full forward.
// eps must lie in [1e-7, 1e-3]. Throws Error on non-finite values.
double grad_check(const std::function<Value(Graph&)>& build_loss, std::span<const Tensor* const> params,
                  double eps);
double grad_check(const std::function<Value(Graph&)>& build_loss, const Tensor& x, double eps);

}  // namespace biaslattice
