// Dense matrices and a small define-then-run reverse-mode tape.
//
// A Tape is built once (leaves plus primitive nodes in topological order)
// and then re-evaluated many times: set leaf values, call forward(), then
// backward(). Every node's value and adjoint buffer is allocated when the
// node is declared, so repeated passes do not allocate.

#ifndef SWL_NUMGRAD_HPP
#define SWL_NUMGRAD_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "swl/error.hpp"

namespace swl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace numgrad {

/// Inputs to exp and sigmoid are clamped to this magnitude.
inline constexpr double kExpClamp = 500.0;

enum class Op {
  Input,
  Parameter,
  MatMul,
  Add,
  AddRow,
  Sub,
  Mul,
  Scale,
  AddConst,
  ScaleBy,
  RowScale,
  Sigmoid,
  Tanh,
  Exp,
  Abs,
  Square,
  Relu,
  Sum,
  RowSum,
  Cols,
  HConcat,
};

const char* op_name(Op op);

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Leaves. Inputs are constants; parameters receive gradients.
  Var input(Eigen::Index rows, Eigen::Index cols, std::string name = {});
  Var parameter(Eigen::Index rows, Eigen::Index cols, std::string name = {});

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (n x m) plus row vector b (1 x m) broadcast over rows.
  Var add_row(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  /// a times the 1 x 1 node s.
  Var scale_by(Var a, Var s);
  /// Row i of a (n x m) multiplied by w(i) for column vector w (n x 1).
  Var row_scale(Var a, Var w);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var relu(Var a);
  /// Sum of all entries, 1 x 1.
  Var sum(Var a);
  /// Sum across columns, n x 1.
  Var row_sum(Var a);
  Var cols(Var a, Eigen::Index start, Eigen::Index count);
  Var hconcat(Var a, Var b);

  void set(Var leaf, const Matrix& value);
  [[nodiscard]] const Matrix& value(Var v) const;
  [[nodiscard]] const Matrix& grad(Var v) const;

  /// Recomputes every non-leaf node. All leaves must have been set.
  void forward();
  /// Reverse pass from the scalar node `output` (defaults to the last node).
  /// Adjoints are zeroed first; exactly one backward pass per forward pass.
  void backward(Var output = {});

  /// Assigns `inputs` to the leaves in declaration order, runs forward and
  /// returns the value of the last node.
  const Matrix& forward_eval(std::span<const Matrix> inputs);
  /// Gradients of the last node with respect to every parameter leaf, in
  /// declaration order.
  std::vector<Matrix> backward_grad();

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] Var last() const { return Var{static_cast<int>(nodes_.size()) - 1}; }
  [[nodiscard]] const std::vector<Var>& leaves() const { return leaves_; }
  [[nodiscard]] const std::vector<Var>& parameters() const { return parameters_; }
  [[nodiscard]] std::string describe(Var v) const;

 private:
  struct Node {
    Op op = Op::Input;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    Eigen::Index start = 0;
    Matrix value;
    Matrix adjoint;
    bool requires_grad = false;
    bool has_value = false;
    std::string name;
  };

  static Node make_node(Op op, int a = -1, int b = -1) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return n;
  }
  Var push(Node node);
  Node& at(Var v);
  [[nodiscard]] const Node& at(Var v) const;
  [[noreturn]] void shape_error(Op op, const std::string& detail) const;
  void propagate(const Node& node);

  std::vector<Node> nodes_;
  std::vector<Var> leaves_;
  std::vector<Var> parameters_;
  bool forward_done_ = false;
};

/// Per-parameter outcome of a finite-difference gradient check.
struct ParameterCheck {
  std::size_t index = 0;
  std::string name;
  double max_rel_error = 0.0;
  bool flagged = false;
};

struct FdReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0.0;
  [[nodiscard]] bool passed() const;
};

/// Compares backward_grad against central differences for every parameter
/// leaf. `inputs` are the leaf values in declaration order.
///
/// The relative error of one coordinate is |g - g_fd| / max(|g|, |g_fd|, a)
/// with a = 1e-6 * max(1, |f(x)|), so coordinates whose true derivative is at
/// the round-off level of f do not dominate the report.
FdReport finite_difference_check(Tape& tape, std::span<const Matrix> inputs,
                                 double tolerance, double step = 1e-5);

/// Adam optimizer over parameter leaves of one tape (minimization).
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(std::vector<Matrix*> parameters, Options options);
  /// Applies one update given gradients aligned with the parameters.
  void step(std::span<const Matrix> gradients);
  [[nodiscard]] long iterations() const { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  Options opt_;
  long t_ = 0;
};

}  // namespace numgrad
}  // namespace swl

#endif  // SWL_NUMGRAD_HPP
