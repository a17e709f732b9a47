#include "flowsynth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace flowsynth::ad {

bool all_finite(const Tensor& t) { return t.allFinite(); }

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::MulCol: return "mul_col";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Reciprocal: return "reciprocal";
    case Op::Sqrt: return "sqrt";
    case Op::MaskMul: return "mask_mul";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::SumAll: return "sum";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::RowNorm: return "row_norm";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!valid()) throw Error(ErrorKind::InvalidArgument, "use of an unset Var (no forward value)");
  return graph->value(id);
}

namespace {

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor* b = nullptr) {
  std::string msg = std::string("shape mismatch in ") + op_name(op) + ": " + shape_str(a);
  if (b != nullptr) msg += " vs " + shape_str(*b);
  throw Error(ErrorKind::ShapeMismatch, msg);
}

Graph& same_graph(Var a, Var b, Op op) {
  if (!a.valid() || !b.valid()) throw Error(ErrorKind::InvalidArgument, std::string("unset Var passed to ") + op_name(op));
  if (a.graph != b.graph) throw Error(ErrorKind::InvalidArgument, std::string("operands of ") + op_name(op) + " live in different graphs");
  return *a.graph;
}

Graph& graph_of(Var a, Op op) {
  if (!a.valid()) throw Error(ErrorKind::InvalidArgument, std::string("unset Var passed to ") + op_name(op));
  return *a.graph;
}

Var unary(Var a, Op op, Tensor value, double scalar = 0.0, Tensor aux = {}) {
  Node n;
  n.op = op;
  n.a = a.id;
  n.scalar = scalar;
  n.value = std::move(value);
  n.aux = std::move(aux);
  return graph_of(a, op).push(std::move(n));
}

Var binary(Var a, Var b, Op op, Tensor value) {
  Graph& g = same_graph(a, b, op);
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(value);
  return g.push(std::move(n));
}

Tensor safe_reciprocal(const Tensor& x) {
  return x.unaryExpr([](double v) { return v == 0.0 ? 0.0 : 1.0 / v; });
}

}  // namespace

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

void Graph::check_owned(Var v, const char* what) const {
  if (!v.valid() || v.graph != this || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + " is not a recorded node of this graph (run forward first)");
  }
}

std::vector<char> Graph::relevant_mask(int lo, int hi, std::span<const Var> wrt) const {
  std::vector<char> rel(static_cast<std::size_t>(hi - lo + 1), 0);
  for (const Var& w : wrt) {
    if (w.id >= lo && w.id <= hi) rel[static_cast<std::size_t>(w.id - lo)] = 1;
  }
  for (int i = lo; i <= hi; ++i) {
    if (rel[static_cast<std::size_t>(i - lo)]) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    bool r = false;
    if (n.a >= lo && rel[static_cast<std::size_t>(n.a - lo)]) r = true;
    if (n.b >= lo && rel[static_cast<std::size_t>(n.b - lo)]) r = true;
    rel[static_cast<std::size_t>(i - lo)] = r ? 1 : 0;
  }
  return rel;
}

std::vector<Tensor> Graph::grad(Var output, std::span<const Var> wrt, const Tensor* seed) {
  check_owned(output, "backward output");
  const Tensor& out_value = value(output.id);
  if (seed == nullptr && (out_value.rows() != 1 || out_value.cols() != 1)) {
    throw Error(ErrorKind::ShapeMismatch, "backward on non-scalar output " + shape_str(out_value) + " requires a seed");
  }
  if (seed != nullptr && (seed->rows() != out_value.rows() || seed->cols() != out_value.cols())) {
    throw Error(ErrorKind::ShapeMismatch, "backward seed " + shape_str(*seed) + " does not match output " + shape_str(out_value));
  }
  int lo = output.id;
  for (const Var& w : wrt) {
    check_owned(w, "gradient target");
    const Node& wn = nodes_[static_cast<std::size_t>(w.id)];
    if (wn.op == Op::Leaf && !wn.requires_grad) throw Error(ErrorKind::InvalidArgument, "gradient requested for a constant leaf");
    lo = std::min(lo, w.id);
  }
  const int hi = output.id;
  const auto rel = relevant_mask(lo, hi, wrt);
  auto is_rel = [&](int id) { return id >= lo && rel[static_cast<std::size_t>(id - lo)] != 0; };

  std::vector<Tensor> adj(static_cast<std::size_t>(hi - lo + 1));
  std::vector<char> has(adj.size(), 0);
  auto slot = [&](int id) -> std::size_t { return static_cast<std::size_t>(id - lo); };
  auto accumulate = [&](int id, Tensor&& g) {
    if (!is_rel(id)) return;
    auto s = slot(id);
    if (has[s]) {
      adj[s] += g;
    } else {
      adj[s] = std::move(g);
      has[s] = 1;
    }
  };

  if (is_rel(hi)) {
    adj[slot(hi)] = seed != nullptr ? *seed : Tensor::Ones(1, 1);
    has[slot(hi)] = 1;
  }

  std::unordered_set<int> wanted;
  for (const Var& w : wrt) wanted.insert(w.id);
  std::vector<std::pair<int, Tensor>> captured;

  for (int i = hi; i >= lo; --i) {
    const auto s = slot(i);
    if (!has[s]) continue;
    if (wanted.count(i) != 0) captured.emplace_back(i, adj[s]);
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& G = adj[s];
    const Tensor& Y = n.value;
    switch (n.op) {
      case Op::Leaf: break;
      case Op::MatMul: {
        const Tensor& A = value(n.a);
        const Tensor& B = value(n.b);
        if (is_rel(n.a)) accumulate(n.a, G * B.transpose());
        if (is_rel(n.b)) accumulate(n.b, A.transpose() * G);
        break;
      }
      case Op::Transpose: accumulate(n.a, G.transpose()); break;
      case Op::Add:
        accumulate(n.a, Tensor(G));
        accumulate(n.b, Tensor(G));
        break;
      case Op::Sub:
        accumulate(n.a, Tensor(G));
        accumulate(n.b, Tensor(-G));
        break;
      case Op::Mul:
        if (is_rel(n.a)) accumulate(n.a, G.cwiseProduct(value(n.b)));
        if (is_rel(n.b)) accumulate(n.b, G.cwiseProduct(value(n.a)));
        break;
      case Op::AddRow:
        accumulate(n.a, Tensor(G));
        if (is_rel(n.b)) accumulate(n.b, G.colwise().sum());
        break;
      case Op::MulCol: {
        const Tensor& A = value(n.a);
        const Tensor& B = value(n.b);
        if (is_rel(n.a)) accumulate(n.a, G.array().colwise() * B.col(0).array());
        if (is_rel(n.b)) accumulate(n.b, G.cwiseProduct(A).rowwise().sum());
        break;
      }
      case Op::Scale: accumulate(n.a, G * n.scalar); break;
      case Op::AddScalar: accumulate(n.a, Tensor(G)); break;
      case Op::Tanh: accumulate(n.a, G.array() * (1.0 - Y.array().square())); break;
      case Op::Relu:
      case Op::LeakyRelu:
      case Op::MaskMul: accumulate(n.a, G.cwiseProduct(n.aux)); break;
      case Op::Sigmoid: accumulate(n.a, G.array() * Y.array() * (1.0 - Y.array())); break;
      case Op::Exp: accumulate(n.a, G.cwiseProduct(Y)); break;
      case Op::Log: accumulate(n.a, G.cwiseProduct(safe_reciprocal(value(n.a)))); break;
      case Op::Reciprocal: accumulate(n.a, -(G.array() * Y.array().square()).matrix()); break;
      case Op::Sqrt: accumulate(n.a, 0.5 * G.cwiseProduct(safe_reciprocal(Y))); break;
      case Op::ConcatCols: {
        const auto na = value(n.a).cols();
        const auto nb = value(n.b).cols();
        if (is_rel(n.a)) accumulate(n.a, G.leftCols(na));
        if (is_rel(n.b)) accumulate(n.b, G.rightCols(nb));
        break;
      }
      case Op::SliceCols: {
        const Tensor& A = value(n.a);
        Tensor d = Tensor::Zero(A.rows(), A.cols());
        d.middleCols(n.i0, n.i1) = G;
        accumulate(n.a, std::move(d));
        break;
      }
      case Op::PadCols: accumulate(n.a, G.middleCols(n.i0, value(n.a).cols())); break;
      case Op::SumAll: {
        const Tensor& A = value(n.a);
        accumulate(n.a, Tensor::Constant(A.rows(), A.cols(), G(0, 0)));
        break;
      }
      case Op::SumRows: accumulate(n.a, G.replicate(value(n.a).rows(), 1)); break;
      case Op::SumCols: accumulate(n.a, G.replicate(1, value(n.a).cols())); break;
      case Op::BroadcastScalar: accumulate(n.a, Tensor::Constant(1, 1, G.sum())); break;
      case Op::BroadcastRows: accumulate(n.a, G.colwise().sum()); break;
      case Op::BroadcastCols: accumulate(n.a, G.rowwise().sum()); break;
      case Op::RowNorm: {
        const Tensor& A = value(n.a);
        Tensor w = G.cwiseProduct(safe_reciprocal(Y));
        accumulate(n.a, A.array().colwise() * w.col(0).array());
        break;
      }
    }
    if (wanted.count(i) == 0) {
      adj[s] = Tensor();
      has[s] = 0;
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto it = std::find_if(captured.begin(), captured.end(), [&](const auto& p) { return p.first == w.id; });
    if (it != captured.end()) {
      out.push_back(it->second);
    } else {
      const Tensor& v = value(w.id);
      out.push_back(Tensor::Zero(v.rows(), v.cols()));
    }
  }
  return out;
}

std::vector<Var> Graph::grad_graph(Var output, std::span<const Var> wrt, const Var* seed) {
  check_owned(output, "backward output");
  const Eigen::Index out_rows = value(output.id).rows();
  const Eigen::Index out_cols = value(output.id).cols();
  if (seed == nullptr && (out_rows != 1 || out_cols != 1)) {
    throw Error(ErrorKind::ShapeMismatch, "backward on non-scalar output requires a seed");
  }
  if (seed != nullptr) {
    check_owned(*seed, "backward seed");
    if (seed->rows() != out_rows || seed->cols() != out_cols) throw Error(ErrorKind::ShapeMismatch, "backward seed does not match output");
  }
  int lo = output.id;
  for (const Var& w : wrt) {
    check_owned(w, "gradient target");
    lo = std::min(lo, w.id);
  }
  const int hi = output.id;
  const auto rel = relevant_mask(lo, hi, wrt);
  auto is_rel = [&](int id) { return id >= lo && rel[static_cast<std::size_t>(id - lo)] != 0; };

  std::vector<int> adj(static_cast<std::size_t>(hi - lo + 1), -1);
  auto slot = [&](int id) -> std::size_t { return static_cast<std::size_t>(id - lo); };
  auto accumulate = [&](int id, Var g) {
    if (!is_rel(id)) return;
    int& cur = adj[slot(id)];
    cur = cur < 0 ? g.id : add(Var{this, cur}, g).id;
  };

  if (is_rel(hi)) adj[slot(hi)] = seed != nullptr ? seed->id : constant(Tensor::Ones(1, 1)).id;

  for (int i = hi; i >= lo; --i) {
    const int gid = adj[slot(i)];
    if (gid < 0) continue;
    // Copy what we need: push() below appends to nodes_.
    const Op op = nodes_[static_cast<std::size_t>(i)].op;
    const int na = nodes_[static_cast<std::size_t>(i)].a;
    const int nb = nodes_[static_cast<std::size_t>(i)].b;
    const double sc = nodes_[static_cast<std::size_t>(i)].scalar;
    const int i0 = nodes_[static_cast<std::size_t>(i)].i0;
    const Var g{this, gid};
    const Var y{this, i};
    const Var a{this, na};
    const Var b{this, nb};
    switch (op) {
      case Op::Leaf: break;
      case Op::MatMul:
        if (is_rel(na)) accumulate(na, matmul(g, transpose(b)));
        if (is_rel(nb)) accumulate(nb, matmul(transpose(a), g));
        break;
      case Op::Transpose: accumulate(na, transpose(g)); break;
      case Op::Add:
        accumulate(na, g);
        accumulate(nb, g);
        break;
      case Op::Sub:
        accumulate(na, g);
        if (is_rel(nb)) accumulate(nb, scale(g, -1.0));
        break;
      case Op::Mul:
        if (is_rel(na)) accumulate(na, mul(g, b));
        if (is_rel(nb)) accumulate(nb, mul(g, a));
        break;
      case Op::AddRow:
        accumulate(na, g);
        if (is_rel(nb)) accumulate(nb, sum_rows(g));
        break;
      case Op::MulCol:
        if (is_rel(na)) accumulate(na, mul_col(g, b));
        if (is_rel(nb)) accumulate(nb, sum_cols(mul(g, a)));
        break;
      case Op::Scale: accumulate(na, scale(g, sc)); break;
      case Op::AddScalar: accumulate(na, g); break;
      case Op::Tanh: accumulate(na, mul(g, add_scalar(scale(square(y), -1.0), 1.0))); break;
      case Op::Relu:
      case Op::LeakyRelu:
      case Op::MaskMul: accumulate(na, mask_mul(g, nodes_[static_cast<std::size_t>(i)].aux)); break;
      case Op::Sigmoid: accumulate(na, mul(g, mul(y, add_scalar(scale(y, -1.0), 1.0)))); break;
      case Op::Exp: accumulate(na, mul(g, y)); break;
      case Op::Log: accumulate(na, mul(g, reciprocal(a))); break;
      case Op::Reciprocal: accumulate(na, scale(mul(g, square(y)), -1.0)); break;
      case Op::Sqrt: accumulate(na, scale(mul(g, reciprocal(y)), 0.5)); break;
      case Op::ConcatCols: {
        const int ca = static_cast<int>(value(na).cols());
        const int cb = static_cast<int>(value(nb).cols());
        if (is_rel(na)) accumulate(na, slice_cols(g, 0, ca));
        if (is_rel(nb)) accumulate(nb, slice_cols(g, ca, cb));
        break;
      }
      case Op::SliceCols: accumulate(na, pad_cols(g, i0, static_cast<int>(value(na).cols()))); break;
      case Op::PadCols: accumulate(na, slice_cols(g, i0, static_cast<int>(value(na).cols()))); break;
      case Op::SumAll: accumulate(na, broadcast_scalar(g, value(na).rows(), value(na).cols())); break;
      case Op::SumRows: accumulate(na, broadcast_rows(g, value(na).rows())); break;
      case Op::SumCols: accumulate(na, broadcast_cols(g, value(na).cols())); break;
      case Op::BroadcastScalar: accumulate(na, sum(g)); break;
      case Op::BroadcastRows: accumulate(na, sum_rows(g)); break;
      case Op::BroadcastCols: accumulate(na, sum_cols(g)); break;
      case Op::RowNorm: accumulate(na, mul_col(a, mul(g, reciprocal(y)))); break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const int id = adj[slot(w.id)];
    if (id >= 0) {
      out.push_back(Var{this, id});
    } else {
      const Tensor& v = value(w.id);
      out.push_back(constant(Tensor::Zero(v.rows(), v.cols())));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// op builders

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_error(Op::MatMul, A, &B);
  return binary(a, b, Op::MatMul, A * B);
}

Var transpose(Var a) { return unary(a, Op::Transpose, a.value().transpose()); }

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error(Op::Add, A, &B);
  return binary(a, b, Op::Add, A + B);
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error(Op::Sub, A, &B);
  return binary(a, b, Op::Sub, A - B);
}

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error(Op::Mul, A, &B);
  return binary(a, b, Op::Mul, A.cwiseProduct(B));
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) shape_error(Op::AddRow, A, &R);
  return binary(a, row, Op::AddRow, A.rowwise() + R.row(0));
}

Var mul_col(Var a, Var col) {
  const Tensor& A = a.value();
  const Tensor& C = col.value();
  if (C.cols() != 1 || C.rows() != A.rows()) shape_error(Op::MulCol, A, &C);
  return binary(a, col, Op::MulCol, A.array().colwise() * C.col(0).array());
}

Var scale(Var a, double s) { return unary(a, Op::Scale, a.value() * s, s); }

Var add_scalar(Var a, double s) { return unary(a, Op::AddScalar, a.value().array() + s, s); }

Var tanh(Var a) { return unary(a, Op::Tanh, a.value().array().tanh()); }

Var relu(Var a) {
  const Tensor& A = a.value();
  Tensor mask = (A.array() > 0.0).cast<double>();
  return unary(a, Op::Relu, A.cwiseMax(0.0), 0.0, std::move(mask));
}

Var leaky_relu(Var a, double slope) {
  const Tensor& A = a.value();
  Tensor mask = (A.array() > 0.0).select(Tensor::Ones(A.rows(), A.cols()), Tensor::Constant(A.rows(), A.cols(), slope));
  Tensor out = A.cwiseProduct(mask);
  return unary(a, Op::LeakyRelu, std::move(out), slope, std::move(mask));
}

Var sigmoid(Var a) {
  Tensor out = a.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return unary(a, Op::Sigmoid, std::move(out));
}

Var exp(Var a) { return unary(a, Op::Exp, a.value().array().exp()); }

Var log(Var a) { return unary(a, Op::Log, a.value().array().log()); }

Var reciprocal(Var a) { return unary(a, Op::Reciprocal, safe_reciprocal(a.value())); }

Var sqrt(Var a) { return unary(a, Op::Sqrt, a.value().array().sqrt()); }

Var mask_mul(Var a, Tensor mask) {
  const Tensor& A = a.value();
  if (mask.rows() != A.rows() || mask.cols() != A.cols()) shape_error(Op::MaskMul, A, &mask);
  Tensor out = A.cwiseProduct(mask);
  return unary(a, Op::MaskMul, std::move(out), 0.0, std::move(mask));
}

Var concat_cols(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows()) shape_error(Op::ConcatCols, A, &B);
  Tensor out(A.rows(), A.cols() + B.cols());
  out << A, B;
  return binary(a, b, Op::ConcatCols, std::move(out));
}

Var slice_cols(Var a, int start, int count) {
  const Tensor& A = a.value();
  if (start < 0 || count < 0 || start + count > A.cols()) shape_error(Op::SliceCols, A);
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.i0 = start;
  n.i1 = count;
  n.value = A.middleCols(start, count);
  return a.graph->push(std::move(n));
}

Var pad_cols(Var a, int start, int total) {
  const Tensor& A = a.value();
  if (start < 0 || start + A.cols() > total) shape_error(Op::PadCols, A);
  Node n;
  n.op = Op::PadCols;
  n.a = a.id;
  n.i0 = start;
  n.i1 = total;
  n.value = Tensor::Zero(A.rows(), total);
  n.value.middleCols(start, A.cols()) = A;
  return a.graph->push(std::move(n));
}

Var sum(Var a) { return unary(a, Op::SumAll, Tensor::Constant(1, 1, a.value().sum())); }

Var sum_rows(Var a) { return unary(a, Op::SumRows, a.value().colwise().sum()); }

Var sum_cols(Var a) { return unary(a, Op::SumCols, a.value().rowwise().sum()); }

Var broadcast_scalar(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Tensor& A = a.value();
  if (A.rows() != 1 || A.cols() != 1) shape_error(Op::BroadcastScalar, A);
  return unary(a, Op::BroadcastScalar, Tensor::Constant(rows, cols, A(0, 0)));
}

Var broadcast_rows(Var a, Eigen::Index rows) {
  const Tensor& A = a.value();
  if (A.rows() != 1) shape_error(Op::BroadcastRows, A);
  return unary(a, Op::BroadcastRows, A.replicate(rows, 1));
}

Var broadcast_cols(Var a, Eigen::Index cols) {
  const Tensor& A = a.value();
  if (A.cols() != 1) shape_error(Op::BroadcastCols, A);
  return unary(a, Op::BroadcastCols, A.replicate(1, cols));
}

Var row_norm(Var a) { return unary(a, Op::RowNorm, a.value().rowwise().norm()); }

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var square(Var a) { return mul(a, a); }

Var dropout(Var a, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw Error(ErrorKind::InvalidArgument, "dropout ratio must lie in [0, 1)");
  if (ratio == 0.0) return a;
  const Tensor& A = a.value();
  std::bernoulli_distribution keep(1.0 - ratio);
  Tensor mask(A.rows(), A.cols());
  const double s = 1.0 / (1.0 - ratio);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  return mask_mul(a, std::move(mask));
}

// ---------------------------------------------------------------------------
// parameters

std::size_t ParamSet::add(std::string name, Tensor init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw Error(ErrorKind::InvalidArgument, "duplicate parameter name '" + name + "'");
  }
  Entry e;
  e.name = std::move(name);
  e.m = Tensor::Zero(init.rows(), init.cols());
  e.v = Tensor::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw Error(ErrorKind::InvalidArgument, "no parameter named '" + name + "'");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

std::vector<Var> ParamSet::bind(Graph& g, bool trainable) const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(trainable ? g.variable(e.value) : g.constant(e.value));
  return out;
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw Error(ErrorKind::InvalidArgument, "gradient count does not match parameter count");
  const std::int64_t t = params.adam_steps() + 1;
  params.set_adam_steps(t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params.entry(i);
    const Tensor& g = grads[i];
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient for '" + e.name + "' has shape " + shape_str(g) + ", expected " + shape_str(e.value));
    }
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
    e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    e.value.array() -= cfg.lr * (e.m.array() / bc1) / ((e.v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace flowsynth::ad
