#include "swl/numgrad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace swl::numgrad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add_const";
    case Op::ScaleBy: return "scale_by";
    case Op::RowScale: return "row_scale";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
    case Op::Relu: return "relu";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::Cols: return "cols";
    case Op::HConcat: return "hconcat";
  }
  return "?";
}

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double clamp_exp(double x) { return std::clamp(x, -kExpClamp, kExpClamp); }

}  // namespace

Var Tape::push(Node node) {
  node.adjoint = Matrix::Zero(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  forward_done_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::at(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error("numgrad: invalid node handle " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::at(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error("numgrad: invalid node handle " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

std::string Tape::describe(Var v) const {
  const Node& n = at(v);
  std::ostringstream os;
  os << "node #" << v.id << " (" << op_name(n.op);
  if (!n.name.empty()) os << " '" << n.name << "'";
  os << ", " << shape_str(n.value) << ")";
  return os.str();
}

void Tape::shape_error(Op op, const std::string& detail) const {
  throw ShapeError("numgrad: shape mismatch at node #" + std::to_string(nodes_.size()) + " (" +
                   op_name(op) + "): " + detail);
}

Var Tape::input(Eigen::Index rows, Eigen::Index cols, std::string name) {
  Node n = make_node(Op::Input);
  n.value = Matrix::Zero(rows, cols);
  n.name = std::move(name);
  Var v = push(std::move(n));
  leaves_.push_back(v);
  return v;
}

Var Tape::parameter(Eigen::Index rows, Eigen::Index cols, std::string name) {
  Node n = make_node(Op::Parameter);
  n.value = Matrix::Zero(rows, cols);
  n.requires_grad = true;
  n.name = std::move(name);
  Var v = push(std::move(n));
  leaves_.push_back(v);
  parameters_.push_back(v);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (x.value.cols() != y.value.rows()) {
    shape_error(Op::MatMul, shape_str(x.value) + " * " + shape_str(y.value));
  }
  Node n = make_node(Op::MatMul, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), y.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

namespace {
bool same_shape(const Matrix& x, const Matrix& y) {
  return x.rows() == y.rows() && x.cols() == y.cols();
}
}  // namespace

Var Tape::add(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (!same_shape(x.value, y.value)) {
    shape_error(Op::Add, shape_str(x.value) + " + " + shape_str(y.value));
  }
  Node n = make_node(Op::Add, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (y.value.rows() != 1 || y.value.cols() != x.value.cols()) {
    shape_error(Op::AddRow, shape_str(x.value) + " + row " + shape_str(y.value));
  }
  Node n = make_node(Op::AddRow, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (!same_shape(x.value, y.value)) {
    shape_error(Op::Sub, shape_str(x.value) + " - " + shape_str(y.value));
  }
  Node n = make_node(Op::Sub, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (!same_shape(x.value, y.value)) {
    shape_error(Op::Mul, shape_str(x.value) + " .* " + shape_str(y.value));
  }
  Node n = make_node(Op::Mul, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  const Node& x = at(a);
  Node n = make_node(Op::Scale, a.id);
  n.scalar = c;
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  const Node& x = at(a);
  Node n = make_node(Op::AddConst, a.id);
  n.scalar = c;
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad;
  return push(std::move(n));
}

Var Tape::scale_by(Var a, Var s) {
  const Node& x = at(a);
  const Node& y = at(s);
  if (y.value.rows() != 1 || y.value.cols() != 1) {
    shape_error(Op::ScaleBy, "scale factor must be 1x1, got " + shape_str(y.value));
  }
  Node n = make_node(Op::ScaleBy, a.id, s.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

Var Tape::row_scale(Var a, Var w) {
  const Node& x = at(a);
  const Node& y = at(w);
  if (y.value.cols() != 1 || y.value.rows() != x.value.rows()) {
    shape_error(Op::RowScale, shape_str(x.value) + " rows scaled by " + shape_str(y.value));
  }
  Node n = make_node(Op::RowScale, a.id, w.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

#define SWL_UNARY(fn, opcode)                              \
  Var Tape::fn(Var a) {                                    \
    const Node& x = at(a);                                 \
    Node n = make_node(opcode, a.id);                                  \
    n.value = Matrix::Zero(x.value.rows(), x.value.cols()); \
    n.requires_grad = x.requires_grad;                     \
    return push(std::move(n));                             \
  }

SWL_UNARY(sigmoid, Op::Sigmoid)
SWL_UNARY(tanh, Op::Tanh)
SWL_UNARY(exp, Op::Exp)
SWL_UNARY(abs, Op::Abs)
SWL_UNARY(square, Op::Square)
SWL_UNARY(relu, Op::Relu)

#undef SWL_UNARY

Var Tape::sum(Var a) {
  const Node& x = at(a);
  Node n = make_node(Op::Sum, a.id);
  n.value = Matrix::Zero(1, 1);
  n.requires_grad = x.requires_grad;
  return push(std::move(n));
}

Var Tape::row_sum(Var a) {
  const Node& x = at(a);
  Node n = make_node(Op::RowSum, a.id);
  n.value = Matrix::Zero(x.value.rows(), 1);
  n.requires_grad = x.requires_grad;
  return push(std::move(n));
}

Var Tape::cols(Var a, Eigen::Index start, Eigen::Index count) {
  const Node& x = at(a);
  if (start < 0 || count <= 0 || start + count > x.value.cols()) {
    shape_error(Op::Cols, "columns [" + std::to_string(start) + ", " +
                              std::to_string(start + count) + ") of " + shape_str(x.value));
  }
  Node n = make_node(Op::Cols, a.id);
  n.start = start;
  n.value = Matrix::Zero(x.value.rows(), count);
  n.requires_grad = x.requires_grad;
  return push(std::move(n));
}

Var Tape::hconcat(Var a, Var b) {
  const Node& x = at(a);
  const Node& y = at(b);
  if (x.value.rows() != y.value.rows()) {
    shape_error(Op::HConcat, shape_str(x.value) + " | " + shape_str(y.value));
  }
  Node n = make_node(Op::HConcat, a.id, b.id);
  n.value = Matrix::Zero(x.value.rows(), x.value.cols() + y.value.cols());
  n.requires_grad = x.requires_grad || y.requires_grad;
  return push(std::move(n));
}

void Tape::set(Var leaf, const Matrix& value) {
  Node& n = at(leaf);
  if (n.op != Op::Input && n.op != Op::Parameter) {
    throw Error("numgrad: " + describe(leaf) + " is not a leaf");
  }
  if (!same_shape(n.value, value)) {
    throw ShapeError("numgrad: shape mismatch at " + describe(leaf) + ": given " +
                     shape_str(value));
  }
  n.value = value;
  n.has_value = true;
  forward_done_ = false;
}

const Matrix& Tape::value(Var v) const { return at(v).value; }

const Matrix& Tape::grad(Var v) const { return at(v).adjoint; }

void Tape::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::Input || n.op == Op::Parameter) {
      if (!n.has_value) {
        throw Error("numgrad: " + describe(Var{static_cast<int>(i)}) + " has no value");
      }
      continue;
    }
    const Matrix& x = nodes_[static_cast<std::size_t>(n.a)].value;
    switch (n.op) {
      case Op::MatMul:
        n.value.noalias() = x * nodes_[static_cast<std::size_t>(n.b)].value;
        break;
      case Op::Add:
        n.value = x + nodes_[static_cast<std::size_t>(n.b)].value;
        break;
      case Op::AddRow:
        n.value = x.rowwise() + nodes_[static_cast<std::size_t>(n.b)].value.row(0);
        break;
      case Op::Sub:
        n.value = x - nodes_[static_cast<std::size_t>(n.b)].value;
        break;
      case Op::Mul:
        n.value = x.cwiseProduct(nodes_[static_cast<std::size_t>(n.b)].value);
        break;
      case Op::Scale:
        n.value = n.scalar * x;
        break;
      case Op::AddConst:
        n.value = x.array() + n.scalar;
        break;
      case Op::ScaleBy:
        n.value = nodes_[static_cast<std::size_t>(n.b)].value(0, 0) * x;
        break;
      case Op::RowScale:
        n.value = x.array().colwise() *
                  nodes_[static_cast<std::size_t>(n.b)].value.col(0).array();
        break;
      case Op::Sigmoid:
        n.value = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-clamp_exp(v))); });
        break;
      case Op::Tanh:
        n.value = x.array().tanh();
        break;
      case Op::Exp:
        n.value = x.unaryExpr([](double v) { return std::exp(clamp_exp(v)); });
        break;
      case Op::Abs:
        n.value = x.cwiseAbs();
        break;
      case Op::Square:
        n.value = x.array().square();
        break;
      case Op::Relu:
        n.value = x.cwiseMax(0.0);
        break;
      case Op::Sum:
        n.value(0, 0) = x.sum();
        break;
      case Op::RowSum:
        n.value = x.rowwise().sum();
        break;
      case Op::Cols:
        n.value = x.middleCols(n.start, n.value.cols());
        break;
      case Op::HConcat: {
        const Matrix& y = nodes_[static_cast<std::size_t>(n.b)].value;
        n.value.leftCols(x.cols()) = x;
        n.value.rightCols(y.cols()) = y;
        break;
      }
      case Op::Input:
      case Op::Parameter:
        break;
    }
  }
  forward_done_ = true;
}

void Tape::propagate(const Node& n) {
  const Matrix& g = n.adjoint;
  Node& x = nodes_[static_cast<std::size_t>(n.a)];
  Node* y = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
  switch (n.op) {
    case Op::MatMul:
      if (x.requires_grad) x.adjoint.noalias() += g * y->value.transpose();
      if (y->requires_grad) y->adjoint.noalias() += x.value.transpose() * g;
      break;
    case Op::Add:
      if (x.requires_grad) x.adjoint += g;
      if (y->requires_grad) y->adjoint += g;
      break;
    case Op::AddRow:
      if (x.requires_grad) x.adjoint += g;
      if (y->requires_grad) y->adjoint += g.colwise().sum();
      break;
    case Op::Sub:
      if (x.requires_grad) x.adjoint += g;
      if (y->requires_grad) y->adjoint -= g;
      break;
    case Op::Mul:
      if (x.requires_grad) x.adjoint += g.cwiseProduct(y->value);
      if (y->requires_grad) y->adjoint += g.cwiseProduct(x.value);
      break;
    case Op::Scale:
      if (x.requires_grad) x.adjoint += n.scalar * g;
      break;
    case Op::AddConst:
      if (x.requires_grad) x.adjoint += g;
      break;
    case Op::ScaleBy:
      if (x.requires_grad) x.adjoint += y->value(0, 0) * g;
      if (y->requires_grad) y->adjoint(0, 0) += g.cwiseProduct(x.value).sum();
      break;
    case Op::RowScale:
      if (x.requires_grad) x.adjoint.array() += g.array().colwise() * y->value.col(0).array();
      if (y->requires_grad) y->adjoint += g.cwiseProduct(x.value).rowwise().sum();
      break;
    case Op::Sigmoid:
      if (x.requires_grad) {
        x.adjoint.array() += g.array() * n.value.array() * (1.0 - n.value.array());
      }
      break;
    case Op::Tanh:
      if (x.requires_grad) {
        x.adjoint.array() += g.array() * (1.0 - n.value.array().square());
      }
      break;
    case Op::Exp:
      if (x.requires_grad) x.adjoint.array() += g.array() * n.value.array();
      break;
    case Op::Abs:
      if (x.requires_grad) {
        x.adjoint.array() +=
            g.array() * x.value.unaryExpr([](double v) {
              return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            }).array();
      }
      break;
    case Op::Square:
      if (x.requires_grad) x.adjoint.array() += 2.0 * g.array() * x.value.array();
      break;
    case Op::Relu:
      if (x.requires_grad) {
        x.adjoint.array() += (x.value.array() > 0.0).select(g.array(), 0.0);
      }
      break;
    case Op::Sum:
      if (x.requires_grad) x.adjoint.array() += g(0, 0);
      break;
    case Op::RowSum:
      if (x.requires_grad) x.adjoint.colwise() += g.col(0);
      break;
    case Op::Cols:
      if (x.requires_grad) x.adjoint.middleCols(n.start, g.cols()) += g;
      break;
    case Op::HConcat:
      if (x.requires_grad) x.adjoint += g.leftCols(x.value.cols());
      if (y->requires_grad) y->adjoint += g.rightCols(y->value.cols());
      break;
    case Op::Input:
    case Op::Parameter:
      break;
  }
}

void Tape::backward(Var output) {
  if (!forward_done_) {
    throw Error("numgrad: backward called without a preceding forward pass");
  }
  if (!output.valid()) output = last();
  const Node& out = at(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ShapeError("numgrad: backward needs a scalar output, " + describe(output) +
                     " is not 1x1");
  }
  for (Node& n : nodes_) n.adjoint.setZero();
  nodes_[static_cast<std::size_t>(output.id)].adjoint(0, 0) = 1.0;
  for (int i = output.id; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::Input || n.op == Op::Parameter || !n.requires_grad) continue;
    propagate(n);
  }
  forward_done_ = false;
}

const Matrix& Tape::forward_eval(std::span<const Matrix> inputs) {
  if (inputs.size() != leaves_.size()) {
    throw ShapeError("numgrad: forward_eval got " + std::to_string(inputs.size()) +
                     " inputs for " + std::to_string(leaves_.size()) + " leaves");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) set(leaves_[i], inputs[i]);
  forward();
  return nodes_.back().value;
}

std::vector<Matrix> Tape::backward_grad() {
  backward(last());
  std::vector<Matrix> out;
  out.reserve(parameters_.size());
  for (Var p : parameters_) out.push_back(at(p).adjoint);
  return out;
}

bool FdReport::passed() const {
  return std::none_of(parameters.begin(), parameters.end(),
                      [](const ParameterCheck& c) { return c.flagged; });
}

FdReport finite_difference_check(Tape& tape, std::span<const Matrix> inputs, double tolerance,
                                 double step) {
  const Matrix& out = tape.forward_eval(inputs);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("numgrad: finite-difference check needs a scalar output, got " +
                     std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }
  const double f0 = out(0, 0);
  const std::vector<Matrix> analytic = tape.backward_grad();
  const double floor_abs = 1e-6 * std::max(1.0, std::abs(f0));

  std::vector<Matrix> probe(inputs.begin(), inputs.end());
  FdReport report;
  const auto& leaves = tape.leaves();
  const auto& params = tape.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto leaf_pos = static_cast<std::size_t>(
        std::find_if(leaves.begin(), leaves.end(), [&](Var v) { return v.id == params[k].id; }) -
        leaves.begin());
    Matrix& x = probe[leaf_pos];
    ParameterCheck check;
    check.index = k;
    check.name = tape.describe(params[k]);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double saved = x(i, j);
        x(i, j) = saved + step;
        const double fp = tape.forward_eval(probe)(0, 0);
        x(i, j) = saved - step;
        const double fm = tape.forward_eval(probe)(0, 0);
        x(i, j) = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[k](i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), floor_abs});
        check.max_rel_error = std::max(check.max_rel_error, std::abs(a - numeric) / denom);
      }
    }
    check.flagged = !(check.max_rel_error < tolerance);
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.parameters.push_back(std::move(check));
  }
  tape.forward_eval(inputs);
  return report;
}

Adam::Adam(std::vector<Matrix*> parameters, Options options)
    : params_(std::move(parameters)), opt_(options) {
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(std::span<const Matrix> gradients) {
  if (gradients.size() != params_.size()) {
    throw ShapeError("adam: " + std::to_string(gradients.size()) + " gradients for " +
                     std::to_string(params_.size()) + " parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Matrix& g = gradients[k];
    m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * g;
    v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * g.cwiseAbs2();
    params_[k]->array() -= opt_.learning_rate * (m_[k].array() / c1) /
                           ((v_[k].array() / c2).sqrt() + opt_.epsilon);
  }
}

}  // namespace swl::numgrad
