#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Graph is an append-only tape: every op evaluates eagerly and records its
// parents and the values backward needs. Two backward sweeps exist:
//   grad()        numeric adjoints, nothing recorded;
//   grad_graph()  adjoints built from graph ops, so they can be differentiated
//                 again (gradient penalties, Hutchinson trace terms).

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsynth/error.hpp"
#include "flowsynth/rng.hpp"

namespace flowsynth::ad {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool all_finite(const Tensor& t);
std::string shape_str(const Tensor& t);

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  AddRow,     // a (r x c) + b (1 x c) broadcast over rows
  MulCol,     // a (r x c) * b (r x 1) broadcast over columns
  Scale,      // a * scalar
  AddScalar,  // a + scalar
  Tanh,
  Relu,
  LeakyRelu,
  Sigmoid,
  Exp,
  Log,
  Reciprocal,  // 1/a, defined as 0 where a == 0
  Sqrt,
  MaskMul,  // a * aux, aux constant (dropout masks, piecewise-linear derivatives)
  ConcatCols,
  SliceCols,
  PadCols,
  SumAll,
  SumRows,  // (r x c) -> (1 x c)
  SumCols,  // (r x c) -> (r x 1)
  BroadcastScalar,
  BroadcastRows,
  BroadcastCols,
  RowNorm,  // (r x c) -> (r x 1) Euclidean norm per row
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  int a = -1;
  int b = -1;
  double scalar = 0.0;
  int i0 = 0;
  int i1 = 0;
  bool requires_grad = false;
  Tensor value;
  Tensor aux;
};

class Graph;

/// Handle to a node. Cheap to copy; valid while its Graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives gradients.
  Var constant(Tensor value);
  /// Leaf that gradients can be requested for (parameters, inputs).
  Var variable(Tensor value);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  /// Numeric adjoints of `output` with respect to each of `wrt`. A scalar
  /// output is seeded with 1; otherwise `seed` must match its shape.
  std::vector<Tensor> grad(Var output, std::span<const Var> wrt, const Tensor* seed = nullptr);

  /// Same as grad(), but each adjoint is itself recorded in this graph.
  std::vector<Var> grad_graph(Var output, std::span<const Var> wrt, const Var* seed = nullptr);

  // Internal: used by the op builders.
  Var push(Node node);
  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

 private:
  std::vector<char> relevant_mask(int lo, int hi, std::span<const Var> wrt) const;
  void check_owned(Var v, const char* what) const;

  std::deque<Node> nodes_;
};

// Op builders. Every builder checks shapes and throws ShapeMismatch naming the op.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);
Var mul_col(Var a, Var col);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var reciprocal(Var a);
Var sqrt(Var a);
Var mask_mul(Var a, Tensor mask);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, int start, int count);
Var pad_cols(Var a, int start, int total);
Var sum(Var a);
Var sum_rows(Var a);
Var sum_cols(Var a);
Var broadcast_scalar(Var a, Eigen::Index rows, Eigen::Index cols);
Var broadcast_rows(Var a, Eigen::Index rows);
Var broadcast_cols(Var a, Eigen::Index cols);
Var row_norm(Var a);

// Composites.
Var mean(Var a);
Var square(Var a);
/// Inverted dropout: zeroes entries with probability `ratio`, scales the rest
/// by 1/(1-ratio). ratio == 0 is the identity and draws nothing.
Var dropout(Var a, double ratio, Rng& rng);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }

/// Flattened copy of the forward value (used by adaptive solvers).
inline Eigen::VectorXd flat(const Var& v) {
  const Tensor& t = v.value();
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

/// Named parameter tensors with Adam moment accumulators.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m;
    Tensor v;
  };

  /// Returns the index of the new tensor. Names must be unique.
  std::size_t add(std::string name, Tensor init);
  std::size_t size() const { return entries_.size(); }
  std::size_t index_of(const std::string& name) const;
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor& value(std::size_t i) { return entries_.at(i).value; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::int64_t adam_steps() const { return steps_; }
  void set_adam_steps(std::int64_t s) { steps_ = s; }
  std::size_t scalar_count() const;

  /// Records each tensor as a leaf of `g`; trainable leaves accept gradients.
  std::vector<Var> bind(Graph& g, bool trainable = true) const;

 private:
  std::vector<Entry> entries_;
  std::int64_t steps_ = 0;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. `grads` is parallel to `params`.
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& cfg);

}  // namespace flowsynth::ad
