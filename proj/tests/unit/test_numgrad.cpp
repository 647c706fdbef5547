#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "swl/numgrad.hpp"
#include "swl/random.hpp"

using namespace swl;
using numgrad::Tape;
using numgrad::Var;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double sd = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = sd * normal(rng);
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// LSTM cell, gate blocks i, f, o, g; output sum(h').
struct Cell {
  Tape tape;
  Var x, h, c, wx, wh, b;
  int k;

  Cell(int d, int hidden) : k(hidden) {
    x = tape.input(1, d, "x");
    h = tape.input(1, k, "h");
    c = tape.input(1, k, "c");
    wx = tape.parameter(d, 4 * k, "Wx");
    wh = tape.parameter(k, 4 * k, "Wh");
    b = tape.parameter(1, 4 * k, "b");
    Var z = tape.add_row(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b);
    Var i = tape.sigmoid(tape.cols(z, 0, k));
    Var f = tape.sigmoid(tape.cols(z, k, k));
    Var o = tape.sigmoid(tape.cols(z, 2 * k, k));
    Var g = tape.tanh(tape.cols(z, 3 * k, k));
    Var c2 = tape.add(tape.mul(f, c), tape.mul(i, g));
    tape.sum(tape.mul(o, tape.tanh(c2)));
  }
};

double cell_reference(const Matrix& x, const Matrix& h, const Matrix& c, const Matrix& wx,
                      const Matrix& wh, const Matrix& b) {
  const int k = static_cast<int>(h.cols());
  double total = 0.0;
  for (int u = 0; u < k; ++u) {
    double z[4];
    for (int gate = 0; gate < 4; ++gate) {
      const int col = gate * k + u;
      double s = b(0, col);
      for (int a = 0; a < x.cols(); ++a) s += x(0, a) * wx(a, col);
      for (int a = 0; a < k; ++a) s += h(0, a) * wh(a, col);
      z[gate] = s;
    }
    const double cn = sigmoid(z[1]) * c(0, u) + sigmoid(z[0]) * std::tanh(z[3]);
    total += sigmoid(z[2]) * std::tanh(cn);
  }
  return total;
}

}  // namespace

TEST(Numgrad, SumOfSquares) {
  Tape t;
  Var x = t.parameter(1, 3);
  t.sum(t.square(x));
  Matrix v(1, 3);
  v << 1, 2, 3;
  const std::vector<Matrix> in{v};
  EXPECT_DOUBLE_EQ(t.forward_eval(in)(0, 0), 14.0);
  const auto g = t.backward_grad();
  EXPECT_DOUBLE_EQ(g[0](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g[0](0, 1), 4.0);
  EXPECT_DOUBLE_EQ(g[0](0, 2), 6.0);
}

TEST(Numgrad, SigmoidAtZero) {
  Tape t;
  Var x = t.parameter(1, 1);
  t.sum(t.sigmoid(x));
  const std::vector<Matrix> in{Matrix::Zero(1, 1)};
  EXPECT_DOUBLE_EQ(t.forward_eval(in)(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(t.backward_grad()[0](0, 0), 0.25);
}

TEST(Numgrad, LstmCellMatchesScalarLoop) {
  Rng rng(11);
  for (int rep = 0; rep < 3; ++rep) {
    Cell cell(4, 3);
    const std::vector<Matrix> in{random_matrix(rng, 1, 4), random_matrix(rng, 1, 3), random_matrix(rng, 1, 3),
                                 random_matrix(rng, 4, 12), random_matrix(rng, 3, 12), random_matrix(rng, 1, 12)};
    const double got = cell.tape.forward_eval(in)(0, 0);
    EXPECT_NEAR(got, cell_reference(in[0], in[1], in[2], in[3], in[4], in[5]), 1e-13);
  }
}

TEST(Numgrad, LstmCellFiniteDifferences) {
  Rng rng(12);
  Cell cell(6, 5);
  const std::vector<Matrix> in{random_matrix(rng, 1, 6), random_matrix(rng, 1, 5), random_matrix(rng, 1, 5),
                               random_matrix(rng, 6, 20, 0.5), random_matrix(rng, 5, 20, 0.5),
                               random_matrix(rng, 1, 20, 0.5)};
  const auto report = numgrad::finite_difference_check(cell.tape, in, 1e-4);
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Numgrad, QuadraticFormFiniteDifferences) {
  Rng rng(13);
  Tape t;
  Var a = t.input(4, 4);
  Var x = t.parameter(4, 1);
  t.sum(t.mul(x, t.matmul(a, x)));
  const std::vector<Matrix> in{random_matrix(rng, 4, 4), random_matrix(rng, 4, 1)};
  EXPECT_LT(numgrad::finite_difference_check(t, in, 1e-8).max_rel_error, 1e-8);
}

TEST(Numgrad, LogisticDerivative) {
  const double lambda = 5.0;
  const double x0 = 0.3;
  Tape t;
  Var x = t.parameter(1, 1);
  t.sum(t.sigmoid(t.scale(x, lambda)));
  const std::vector<Matrix> in{Matrix::Constant(1, 1, x0)};
  const double psi = t.forward_eval(in)(0, 0);
  EXPECT_NEAR(t.backward_grad()[0](0, 0), lambda * psi * (1.0 - psi), 1e-14);
  EXPECT_LT(numgrad::finite_difference_check(t, in, 1e-6).max_rel_error, 1e-6);
}

// Every primitive against central differences on 100 random inputs.
TEST(Numgrad, EveryPrimitiveMatchesFiniteDifferences) {
  using Build = std::function<Var(Tape&, Var, Var)>;
  struct Case {
    const char* name;
    int ar, ac, br, bc;
    Build build;
    bool away_from_zero;
  };
  const std::vector<Case> cases{
      {"matmul", 3, 4, 4, 2, [](Tape& t, Var a, Var b) { return t.matmul(a, b); }, false},
      {"add", 3, 4, 3, 4, [](Tape& t, Var a, Var b) { return t.add(a, b); }, false},
      {"add_row", 3, 4, 1, 4, [](Tape& t, Var a, Var b) { return t.add_row(a, b); }, false},
      {"sub", 3, 4, 3, 4, [](Tape& t, Var a, Var b) { return t.sub(a, b); }, false},
      {"mul", 3, 4, 3, 4, [](Tape& t, Var a, Var b) { return t.mul(a, b); }, false},
      {"scale", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.scale(a, -1.7); }, false},
      {"add_const", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.add_const(a, 0.4); }, false},
      {"scale_by", 3, 4, 1, 1, [](Tape& t, Var a, Var b) { return t.scale_by(a, b); }, false},
      {"row_scale", 3, 4, 3, 1, [](Tape& t, Var a, Var b) { return t.row_scale(a, b); }, false},
      {"sigmoid", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.sigmoid(a); }, false},
      {"tanh", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.tanh(a); }, false},
      {"exp", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.exp(a); }, false},
      {"abs", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.abs(a); }, true},
      {"square", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.square(a); }, false},
      {"relu", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.relu(a); }, true},
      {"sum", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.sum(a); }, false},
      {"row_sum", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.row_sum(a); }, false},
      {"cols", 3, 4, 1, 1, [](Tape& t, Var a, Var) { return t.cols(a, 1, 2); }, false},
      {"hconcat", 3, 4, 3, 2, [](Tape& t, Var a, Var b) { return t.hconcat(a, b); }, false},
  };
  Rng rng(14);
  for (const Case& c : cases) {
    Tape t;
    Var a = t.parameter(c.ar, c.ac);
    Var b = t.parameter(c.br, c.bc);
    Var y = c.build(t, a, b);
    const Matrix shape = [&]() -> Matrix {
      std::vector<Matrix> probe{Matrix::Ones(c.ar, c.ac), Matrix::Ones(c.br, c.bc)};
      t.forward_eval(probe);
      return t.value(y);
    }();
    Var w = t.input(shape.rows(), shape.cols());
    t.sum(t.mul(y, w));
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      Matrix av = random_matrix(rng, c.ar, c.ac);
      if (c.away_from_zero) {
        for (int k = 0; k < av.size(); ++k) {
          double& v = av.data()[k];
          if (std::abs(v) < 1e-3) v = v < 0 ? -0.5 : 0.5;
        }
      }
      const std::vector<Matrix> in{av, random_matrix(rng, c.br, c.bc),
                                   random_matrix(rng, static_cast<int>(shape.rows()), static_cast<int>(shape.cols()))};
      worst = std::max(worst, numgrad::finite_difference_check(t, in, 1e-4).max_rel_error);
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Numgrad, RepeatedBackwardIsIdentical) {
  Rng rng(15);
  Cell cell(3, 2);
  const std::vector<Matrix> in{random_matrix(rng, 1, 3), random_matrix(rng, 1, 2), random_matrix(rng, 1, 2),
                               random_matrix(rng, 3, 8), random_matrix(rng, 2, 8), random_matrix(rng, 1, 8)};
  cell.tape.forward_eval(in);
  const auto g1 = cell.tape.backward_grad();
  cell.tape.forward_eval(in);
  const auto g2 = cell.tape.backward_grad();
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_EQ(g1[k], g2[k]);
}

TEST(Numgrad, BackwardBeforeForwardThrows) {
  Tape t;
  Var x = t.parameter(1, 1);
  t.sum(x);
  EXPECT_THROW(t.backward(), Error);
}

TEST(Numgrad, ShapeMismatchNamesTheNode) {
  Tape t;
  Var a = t.input(2, 3, "left");
  Var b = t.input(2, 3, "right");
  try {
    t.matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Numgrad, NonScalarFiniteDifferenceThrows) {
  Tape t;
  Var x = t.parameter(2, 2);
  t.square(x);
  const std::vector<Matrix> in{Matrix::Ones(2, 2)};
  EXPECT_THROW(numgrad::finite_difference_check(t, in, 1e-4), ShapeError);
}

TEST(Numgrad, ExpIsClamped) {
  Tape t;
  Var x = t.parameter(1, 1);
  t.sum(t.exp(x));
  const std::vector<Matrix> in{Matrix::Constant(1, 1, 1e4)};
  EXPECT_TRUE(std::isfinite(t.forward_eval(in)(0, 0)));
  EXPECT_DOUBLE_EQ(t.forward_eval(in)(0, 0), std::exp(numgrad::kExpClamp));
}

TEST(Numgrad, AdamMinimizesQuadratic) {
  Matrix x = Matrix::Constant(1, 2, 3.0);
  numgrad::Adam adam({&x}, {.learning_rate = 0.1});
  for (int i = 0; i < 500; ++i) {
    const std::vector<Matrix> g{2.0 * x};
    adam.step(g);
  }
  EXPECT_LT(x.norm(), 1e-2);
  EXPECT_EQ(adam.iterations(), 500);
}
