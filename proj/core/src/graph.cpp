// core/src/graph.cpp

#include "biaslattice/graph.hpp"

#include <cmath>
#include <cstring>

namespace biaslattice {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftmax: return "softmax";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSum: return "sum";
    case Op::kScale: return "scale";
    case Op::kCustom: return "custom";
  }
  return "?";
}

Value Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value{static_cast<int32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::at(Value v) const {
  if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
    throw Error(strcat_all("graph: invalid value id ", v.id));
  return nodes_[static_cast<size_t>(v.id)];
}

Graph::Node& Graph::at_mut(Value v) { return const_cast<Node&>(at(v)); }

void Graph::check_same_shape(const char* op, Value a, Value b) const {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (!ta.same_shape(tb))
    throw ShapeError(strcat_all(op, ": shape mismatch ", ta.shape_str(), " vs ", tb.shape_str()));
}

Value Graph::param(const Tensor& t) {
  auto it = bound_ids_.find(&t);
  if (it != bound_ids_.end()) return Value{it->second};
  Node n;
  n.op = Op::kLeaf;
  n.value = t;  // copy; parameters are small at desk scale
  n.bound = &t;
  n.needs_grad = t.requires_grad;
  Value v = push(std::move(n));
  bound_ids_.emplace(&t, v.id);
  return v;
}

Value Graph::constant(Tensor t) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(t);
  return push(std::move(n));
}

Value Graph::constant(std::vector<int64_t> shape, std::vector<double> data) {
  return constant(Tensor(std::move(shape), std::move(data)));
}

Value Graph::zeros(std::vector<int64_t> shape) { return constant(Tensor(std::move(shape))); }

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  int ra = ta.rank(), rb = tb.rank();
  int64_t m, k, n;
  std::vector<int64_t> out_shape;
  if (ra == 2 && rb == 2) {
    m = ta.dim(0); k = ta.dim(1); n = tb.dim(1);
    if (tb.dim(0) != k)
      throw ShapeError(strcat_all("matmul: inner dims ", ta.shape_str(), " x ", tb.shape_str()));
    out_shape = {m, n};
  } else if (ra == 2 && rb == 1) {
    m = ta.dim(0); k = ta.dim(1); n = 1;
    if (tb.dim(0) != k)
      throw ShapeError(strcat_all("matmul: inner dims ", ta.shape_str(), " x ", tb.shape_str()));
    out_shape = {m};
  } else if (ra == 1 && rb == 2) {
    m = 1; k = ta.dim(0); n = tb.dim(1);
    if (tb.dim(0) != k)
      throw ShapeError(strcat_all("matmul: inner dims ", ta.shape_str(), " x ", tb.shape_str()));
    out_shape = {n};
  } else if (ra == 1 && rb == 1) {
    m = 1; n = 1; k = ta.dim(0);
    if (tb.dim(0) != k)
      throw ShapeError(strcat_all("matmul: inner dims ", ta.shape_str(), " x ", tb.shape_str()));
    out_shape = {1};
  } else {
    throw ShapeError(strcat_all("matmul: unsupported ranks ", ta.shape_str(), " x ", tb.shape_str()));
  }

  Tensor out(out_shape);
  const double* pa = ta.data.data();
  const double* pb = tb.data.data();
  double* po = out.data.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }

  Node node;
  node.op = Op::kMatmul;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  node.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(node));
}

Value Graph::add(Value a, Value b) {
  check_same_shape("add", a, b);
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.value = std::move(out);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Value Graph::sub(Value a, Value b) { return add(a, scale(b, -1.0)); }

Value Graph::mul(Value a, Value b) {
  check_same_shape("mul", a, b);
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  Tensor out(ta.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  n.value = std::move(out);
  n.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return push(std::move(n));
}

Value Graph::tanh(Value x) {
  const Tensor& tx = at(x).value;
  Tensor out(tx.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::tanh(tx.data[i]);
  Node n;
  n.op = Op::kTanh;
  n.inputs = {x.id};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::sigmoid(Value x) {
  const Tensor& tx = at(x).value;
  Tensor out(tx.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-tx.data[i]));
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {x.id};
  n.value = std::move(out);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::softmax(Value x, int axis) {
  const Tensor& tx = at(x).value;
  int r = tx.rank();
  if (axis < 0 || axis >= r)
    throw ShapeError(strcat_all("softmax: axis ", axis, " out of range for ", tx.shape_str()));
  int64_t axis_dim = tx.dim(axis);
  int64_t inner = 1;
  for (int i = axis + 1; i < r; ++i) inner *= tx.dim(i);
  int64_t outer = tx.numel() / (axis_dim * inner);

  Tensor out(tx.shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * axis_dim * inner + in;
      double mx = tx.data[static_cast<size_t>(base)];
      for (int64_t a = 1; a < axis_dim; ++a)
        mx = std::max(mx, tx.data[static_cast<size_t>(base + a * inner)]);
      double z = 0.0;
      for (int64_t a = 0; a < axis_dim; ++a)
        z += std::exp(tx.data[static_cast<size_t>(base + a * inner)] - mx);
      for (int64_t a = 0; a < axis_dim; ++a)
        out.data[static_cast<size_t>(base + a * inner)] =
            std::exp(tx.data[static_cast<size_t>(base + a * inner)] - mx) / z;
    }
  }
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {x.id};
  n.value = std::move(out);
  n.axis = axis;
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::concat(std::span<const Value> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0) throw ShapeError(strcat_all("concat: only axis 0 is supported, got ", axis));
  const Tensor& first = at(parts[0]).value;
  int r = first.rank();
  std::vector<int64_t> out_shape = first.shape;
  int64_t total0 = 0;
  for (Value p : parts) {
    const Tensor& t = at(p).value;
    if (t.rank() != r)
      throw ShapeError(strcat_all("concat: rank mismatch ", t.shape_str(), " vs ", first.shape_str()));
    for (int i = 1; i < r; ++i)
      if (t.dim(i) != first.dim(i))
        throw ShapeError(strcat_all("concat: trailing dims differ ", t.shape_str(), " vs ",
                                    first.shape_str()));
    total0 += t.dim(0);
  }
  out_shape[0] = total0;
  Tensor out(out_shape);
  size_t off = 0;
  for (Value p : parts) {
    const Tensor& t = at(p).value;
    std::memcpy(out.data.data() + off, t.data.data(), t.data.size() * sizeof(double));
    off += t.data.size();
  }
  Node n;
  n.op = Op::kConcat;
  n.inputs.reserve(parts.size());
  bool ng = false;
  for (Value p : parts) {
    n.inputs.push_back(p.id);
    ng = ng || at(p).needs_grad;
  }
  n.value = std::move(out);
  n.needs_grad = ng;
  return push(std::move(n));
}

Value Graph::stack(std::span<const Value> parts, std::vector<int64_t> shape) {
  Value c = concat(parts, 0);
  Node& n = at_mut(c);
  if (Tensor::numel_of(shape) != n.value.numel())
    throw ShapeError(strcat_all("stack: annotation ", Tensor(shape).shape_str(), " incompatible with ",
                                n.value.numel(), " elements"));
  n.value.shape = std::move(shape);
  return c;
}

Value Graph::stack_rows(std::span<const Value> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const Tensor& first = at(rows[0]).value;
  if (first.rank() != 1) throw ShapeError("stack_rows: inputs must be rank-1");
  return stack(rows, {static_cast<int64_t>(rows.size()), first.dim(0)});
}

Value Graph::slice(Value x, int axis, int64_t start, int64_t len) {
  if (axis != 0) throw ShapeError(strcat_all("slice: only axis 0 is supported, got ", axis));
  const Tensor& tx = at(x).value;
  if (tx.rank() < 1) throw ShapeError("slice: rank-0 input");
  if (start < 0 || len < 1 || start + len > tx.dim(0))
    throw ShapeError(strcat_all("slice: range [", start, ",", start + len, ") out of bounds for ",
                                tx.shape_str()));
  std::vector<int64_t> out_shape = tx.shape;
  out_shape[0] = len;
  int64_t inner = tx.numel() / tx.dim(0);
  Tensor out(out_shape);
  std::memcpy(out.data.data(), tx.data.data() + start * inner,
              static_cast<size_t>(len * inner) * sizeof(double));
  Node n;
  n.op = Op::kSlice;
  n.inputs = {x.id};
  n.value = std::move(out);
  n.start = start;
  n.length = len;
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::row(Value m, int64_t i) {
  if (at(m).value.rank() != 2)
    throw ShapeError(strcat_all("row: expected rank-2, got ", at(m).value.shape_str()));
  int64_t cols = at(m).value.dim(1);  // read before slice() may grow the node table
  Value s = slice(m, 0, i, 1);
  at_mut(s).value.shape = {cols};
  return s;
}

Value Graph::sum(Value x) {
  const Tensor& tx = at(x).value;
  double acc = 0.0;
  for (double v : tx.data) acc += v;
  Node n;
  n.op = Op::kSum;
  n.inputs = {x.id};
  n.value = Tensor::scalar(acc);
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::scale(Value x, double s) {
  const Tensor& tx = at(x).value;
  Tensor out(tx.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = tx.data[i] * s;
  Node n;
  n.op = Op::kScale;
  n.inputs = {x.id};
  n.value = std::move(out);
  n.alpha = s;
  n.needs_grad = at(x).needs_grad;
  return push(std::move(n));
}

Value Graph::custom(std::string name, std::vector<Value> inputs, Tensor out, CustomBackward backward) {
  Node n;
  n.op = Op::kCustom;
  bool ng = false;
  for (Value v : inputs) {
    n.inputs.push_back(v.id);
    ng = ng || at(v).needs_grad;
  }
  n.value = std::move(out);
  n.needs_grad = ng;
  n.custom_backward = std::move(backward);
  n.name = std::move(name);
  return push(std::move(n));
}

const Tensor& Graph::value(Value v) const { return at(v).value; }

std::span<const double> Graph::node_grad(Value v) const { return at(v).grad; }

void Graph::backward(Value loss) {
  const Node& ln = at(loss);
  if (ln.value.numel() != 1)
    throw Error(strcat_all("backward: loss must be scalar, got shape ", ln.value.shape_str()));

  for (Node& n : nodes_) n.grad.clear();

  auto grad_of = [&](int32_t id) -> std::vector<double>& {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
  };

  grad_of(loss.id)[0] = 1.0;

  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    const std::vector<double>& g = n.grad;
    switch (n.op) {
      case Op::kLeaf: {
        if (n.bound && n.bound->requires_grad) {
          n.bound->ensure_grad();
          for (size_t i = 0; i < g.size(); ++i) n.bound->grad[i] += g[i];
        }
        break;
      }
      case Op::kConst:
        break;
      case Op::kMatmul: {
        Node& na = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& nb = nodes_[static_cast<size_t>(n.inputs[1])];
        const Tensor& ta = na.value;
        const Tensor& tb = nb.value;
        int64_t k = (ta.rank() == 2) ? ta.dim(1) : ta.dim(0);
        int64_t m = ta.numel() / k;
        int64_t nn = tb.numel() / k;
        // dA += G * B^T ; dB += A^T * G (flat row-major views)
        if (na.needs_grad) {
          std::vector<double>& ga = grad_of(n.inputs[0]);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              const double* grow = g.data() + i * nn;
              const double* brow = tb.data.data() + kk * nn;
              for (int64_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
              ga[static_cast<size_t>(i * k + kk)] += acc;
            }
        }
        if (nb.needs_grad) {
          std::vector<double>& gb = grad_of(n.inputs[1]);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t kk = 0; kk < k; ++kk) {
              double av = ta.data[static_cast<size_t>(i * k + kk)];
              if (av == 0.0) continue;
              const double* grow = g.data() + i * nn;
              double* brow = gb.data() + kk * nn;
              for (int64_t j = 0; j < nn; ++j) brow[j] += av * grow[j];
            }
        }
        break;
      }
      case Op::kAdd: {
        for (int which = 0; which < 2; ++which) {
          Node& ni = nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(which)])];
          if (!ni.needs_grad) continue;
          std::vector<double>& gi = grad_of(n.inputs[static_cast<size_t>(which)]);
          for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        break;
      }
      case Op::kMul: {
        Node& na = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& nb = nodes_[static_cast<size_t>(n.inputs[1])];
        if (na.needs_grad) {
          std::vector<double>& ga = grad_of(n.inputs[0]);
          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb.value.data[i];
        }
        if (nb.needs_grad) {
          std::vector<double>& gb = grad_of(n.inputs[1]);
          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na.value.data[i];
        }
        break;
      }
      case Op::kTanh: {
        if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          double y = n.value.data[i];
          gx[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kSigmoid: {
        if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) {
          double y = n.value.data[i];
          gx[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSoftmax: {
        if (!nodes_[static_cast<size_t>(n.inputs[0])].needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        const Tensor& y = n.value;
        int64_t axis_dim = y.dim(n.axis);
        int64_t inner = 1;
        for (int i = n.axis + 1; i < y.rank(); ++i) inner *= y.dim(i);
        int64_t outer = y.numel() / (axis_dim * inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * axis_dim * inner + in;
            double dot = 0.0;
            for (int64_t a = 0; a < axis_dim; ++a) {
              size_t idx = static_cast<size_t>(base + a * inner);
              dot += g[idx] * y.data[idx];
            }
            for (int64_t a = 0; a < axis_dim; ++a) {
              size_t idx = static_cast<size_t>(base + a * inner);
              gx[idx] += y.data[idx] * (g[idx] - dot);
            }
          }
        break;
      }
      case Op::kConcat: {
        size_t off = 0;
        for (int32_t in_id : n.inputs) {
          Node& ni = nodes_[static_cast<size_t>(in_id)];
          size_t len = ni.value.data.size();
          if (ni.needs_grad) {
            std::vector<double>& gi = grad_of(in_id);
            for (size_t i = 0; i < len; ++i) gi[i] += g[off + i];
          }
          off += len;
        }
        break;
      }
      case Op::kSlice: {
        Node& ni = nodes_[static_cast<size_t>(n.inputs[0])];
        if (!ni.needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        int64_t inner = ni.value.numel() / ni.value.dim(0);
        size_t off = static_cast<size_t>(n.start * inner);
        for (size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
        break;
      }
      case Op::kSum: {
        Node& ni = nodes_[static_cast<size_t>(n.inputs[0])];
        if (!ni.needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        break;
      }
      case Op::kScale: {
        Node& ni = nodes_[static_cast<size_t>(n.inputs[0])];
        if (!ni.needs_grad) break;
        std::vector<double>& gx = grad_of(n.inputs[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.alpha;
        break;
      }
      case Op::kCustom: {
        std::vector<std::span<double>> input_grads;
        input_grads.reserve(n.inputs.size());
        for (int32_t in_id : n.inputs) {
          Node& ni = nodes_[static_cast<size_t>(in_id)];
          if (ni.needs_grad) {
            input_grads.emplace_back(grad_of(in_id));
          } else {
            input_grads.emplace_back();
          }
        }
        n.custom_backward(g, input_grads);
        break;
      }
    }
  }
}

Value forward_op(Graph& g, Op kind, std::span<const Value> inputs, const OpAttrs& attrs) {
  auto need = [&](size_t n) {
    if (inputs.size() != n)
      throw ShapeError(strcat_all(op_name(kind), ": expected ", n, " inputs, got ", inputs.size()));
  };
  switch (kind) {
    case Op::kMatmul: need(2); return g.matmul(inputs[0], inputs[1]);
    case Op::kAdd: need(2); return g.add(inputs[0], inputs[1]);
    case Op::kMul: need(2); return g.mul(inputs[0], inputs[1]);
    case Op::kTanh: need(1); return g.tanh(inputs[0]);
    case Op::kSigmoid: need(1); return g.sigmoid(inputs[0]);
    case Op::kSoftmax: need(1); return g.softmax(inputs[0], attrs.axis);
    case Op::kConcat: return g.concat(inputs, attrs.axis);
    case Op::kSlice: need(1); return g.slice(inputs[0], attrs.axis, attrs.start, attrs.length);
    case Op::kSum: need(1); return g.sum(inputs[0]);
    case Op::kScale: need(1); return g.scale(inputs[0], attrs.alpha);
    default:
      throw Error(strcat_all("forward_op: ", op_name(kind), " is not a dispatchable op"));
  }
}

double grad_check(const std::function<Value(Graph&)>& build_loss, std::span<const Tensor* const> params,
                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw Error(strcat_all("grad_check: eps ", eps, " outside [1e-7, 1e-3]"));

  for (const Tensor* p : params) p->zero_grad();
  double base;
  {
    Graph g;
    Value loss = build_loss(g);
    base = g.value(loss).data[0];
    g.backward(loss);
  }
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss");

  std::vector<std::vector<double>> analytic;
  for (const Tensor* p : params) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }

  auto eval = [&]() {
    Graph g;
    Value loss = build_loss(g);
    double v = g.value(loss).data[0];
    if (!std::isfinite(v)) throw Error("grad_check: non-finite loss during probing");
    return v;
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    // params hold mutable data; const_cast is confined to the probe.
    Tensor& t = const_cast<Tensor&>(*params[pi]);
    for (size_t i = 0; i < t.data.size(); ++i) {
      double saved = t.data[i];
      t.data[i] = saved + eps;
      double fp = eval();
      t.data[i] = saved - eps;
      double fm = eval();
      t.data[i] = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) throw Error("grad_check: non-finite gradient");
      double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const std::function<Value(Graph&)>& build_loss, const Tensor& x, double eps) {
  const Tensor* p = &x;
  return grad_check(build_loss, std::span<const Tensor* const>(&p, 1), eps);
}

}  // namespace biaslattice
