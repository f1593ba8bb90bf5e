#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "unic/autodiff.hpp"
#include "unic/layers.hpp"

using namespace unic;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

using Op = std::function<Var(Tape&, std::vector<Var>&)>;

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double spread = 1.0) {
  std::normal_distribution<double> n(0.0, spread);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Scalar probe: sum(op(x) .* R) for a fixed random R.
double probe(const Op& op, const std::vector<Matrix>& inputs, const Matrix* weights, std::vector<Matrix>* grads) {
  ad::ParameterStore empty;
  Tape t(empty, grads != nullptr);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.variable(m));
  const Var out = op(t, vars);
  const Var loss = weights ? ad::sum(ad::mul(out, t.constant(*weights))) : out;
  if (grads) {
    t.backward(loss);
    grads->clear();
    for (const auto& v : vars) grads->push_back(t.grad(v.id));
  }
  return loss.value()(0, 0);
}

double max_relative_error(const Op& op, std::vector<Matrix> inputs, std::mt19937_64& rng, bool scalar_out = false) {
  ad::ParameterStore empty;
  Tape shape_tape(empty, false);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(shape_tape.variable(m));
  const Var shape = op(shape_tape, vars);
  const Matrix r = random_matrix(rng, shape.rows(), shape.cols());
  const Matrix* w = scalar_out ? nullptr : &r;

  std::vector<Matrix> analytic;
  probe(op, inputs, w, &analytic);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data()[i];
      inputs[k].data()[i] = x0 + h;
      const double fp = probe(op, inputs, w, nullptr);
      inputs[k].data()[i] = x0 - h;
      const double fm = probe(op, inputs, w, nullptr);
      inputs[k].data()[i] = x0;
      const double num = (fp - fm) / (2 * h);
      const double an = analytic[k].data()[i];
      worst = std::max(worst, std::abs(an - num) / std::max({std::abs(an), std::abs(num), 1e-6}));
    }
  }
  return worst;
}

}  // namespace

TEST(Autodiff, ForwardValues) {
  ad::ParameterStore empty;
  Tape t(empty, false);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0.5, -1, 2, 0;
  const Var va = t.constant(a), vb = t.constant(b);
  EXPECT_EQ(ad::matmul(va, vb).value(), a * b);
  EXPECT_EQ(ad::add(va, vb).value(), a + b);
  EXPECT_EQ(ad::mul(va, vb).value(), a.cwiseProduct(b));
  EXPECT_EQ(ad::mean_rows(va).value(), Matrix((Matrix(1, 2) << 2, 3).finished()));
  EXPECT_EQ(ad::reshape(va, 1, 4).value(), Matrix((Matrix(1, 4) << 1, 2, 3, 4).finished()));
  EXPECT_EQ(ad::sum(va).value()(0, 0), 10.0);
  EXPECT_NEAR(ad::tanh(va).value()(0, 0), std::tanh(1.0), 1e-15);
  EXPECT_EQ(ad::gelu(t.constant(Matrix::Zero(1, 1))).value()(0, 0), 0.0);
  EXPECT_NEAR(ad::gelu(t.constant(Matrix::Constant(1, 1, 8.0))).value()(0, 0), 8.0, 1e-9);
  EXPECT_EQ(ad::mse(va, b).value()(0, 0), (a - b).squaredNorm() / 4);
  const Var rep = ad::replace_rows(va, t.constant(Matrix::Constant(1, 2, 9.0)), {1});
  EXPECT_EQ(rep.value(), Matrix((Matrix(2, 2) << 1, 2, 9, 9).finished()));
  const Var rm = ad::remap(va, 1, 3, {3, -1, 0});
  EXPECT_EQ(rm.value(), Matrix((Matrix(1, 3) << 4, 0, 1).finished()));
}

TEST(Autodiff, AttentionMatchesNaive) {
  std::mt19937_64 rng(1);
  const Matrix q = random_matrix(rng, 5, 4), k = random_matrix(rng, 5, 4), v = random_matrix(rng, 5, 4);
  ad::ParameterStore empty;
  Tape t(empty, false);
  const Matrix out = ad::attention(t.constant(q), t.constant(k), t.constant(v), 2).value();
  for (int h = 0; h < 2; ++h) {
    const Matrix qh = q.middleCols(2 * h, 2), kh = k.middleCols(2 * h, 2), vh = v.middleCols(2 * h, 2);
    for (int i = 0; i < 5; ++i) {
      std::vector<double> s(5);
      double mx = -INFINITY, z = 0;
      for (int j = 0; j < 5; ++j) mx = std::max(mx, s[j] = qh.row(i).dot(kh.row(j)) / std::sqrt(2.0));
      for (int j = 0; j < 5; ++j) z += s[j] = std::exp(s[j] - mx);
      for (int c = 0; c < 2; ++c) {
        double acc = 0;
        for (int j = 0; j < 5; ++j) acc += s[j] / z * vh(j, c);
        EXPECT_NEAR(out(i, 2 * h + c), acc, 1e-12);
      }
    }
  }
}

TEST(Autodiff, LayerNormStatistics) {
  std::mt19937_64 rng(2);
  ad::ParameterStore empty;
  Tape t(empty, false);
  const Var y = ad::layer_norm(t.constant(random_matrix(rng, 3, 6, 4.0)), t.constant(Matrix::Ones(1, 6)),
                               t.constant(Matrix::Zero(1, 6)));
  for (int r = 0; r < 3; ++r) {
    EXPECT_NEAR(y.value().row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.value().row(r).array().square()).mean(), 1.0, 1e-5);
  }
}

struct OpCase {
  const char* name;
  Op op;
  std::vector<std::pair<int, int>> shapes;
};

class OpGradient : public ::testing::TestWithParam<int> {};

const std::vector<OpCase>& op_cases() {
  static const std::vector<OpCase> cases = {
      {"matmul", [](Tape&, std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
      {"linear", [](Tape&, std::vector<Var>& v) { return ad::linear(v[0], v[1], v[2]); }, {{3, 4}, {4, 2}, {1, 2}}},
      {"add", [](Tape&, std::vector<Var>& v) { return ad::add(v[0], v[1]); }, {{2, 3}, {2, 3}}},
      {"sub", [](Tape&, std::vector<Var>& v) { return ad::sub(v[0], v[1]); }, {{2, 3}, {2, 3}}},
      {"mul", [](Tape&, std::vector<Var>& v) { return ad::mul(v[0], v[1]); }, {{2, 3}, {2, 3}}},
      {"scale", [](Tape&, std::vector<Var>& v) { return ad::scale(v[0], -2.5); }, {{2, 3}}},
      {"add_row", [](Tape&, std::vector<Var>& v) { return ad::add_row(v[0], v[1]); }, {{4, 3}, {1, 3}}},
      {"sub_row", [](Tape&, std::vector<Var>& v) { return ad::sub_row(v[0], v[1]); }, {{4, 3}, {1, 3}}},
      {"gelu", [](Tape&, std::vector<Var>& v) { return ad::gelu(v[0]); }, {{3, 5}}},
      {"tanh", [](Tape&, std::vector<Var>& v) { return ad::tanh(v[0]); }, {{3, 5}}},
      {"layer_norm", [](Tape&, std::vector<Var>& v) { return ad::layer_norm(v[0], v[1], v[2]); }, {{3, 5}, {1, 5}, {1, 5}}},
      {"attention", [](Tape&, std::vector<Var>& v) { return ad::attention(v[0], v[1], v[2], 2); }, {{4, 4}, {4, 4}, {4, 4}}},
      {"slice_rows", [](Tape&, std::vector<Var>& v) { return ad::slice_rows(v[0], 1, 2); }, {{4, 3}}},
      {"slice_cols", [](Tape&, std::vector<Var>& v) { return ad::slice_cols(v[0], 1, 2); }, {{4, 3}}},
      {"concat_rows", [](Tape&, std::vector<Var>& v) { return ad::concat_rows(std::span<const Var>(v)); }, {{2, 3}, {1, 3}}},
      {"concat_cols", [](Tape&, std::vector<Var>& v) { return ad::concat_cols(std::span<const Var>(v)); }, {{2, 3}, {2, 1}}},
      {"reshape", [](Tape&, std::vector<Var>& v) { return ad::reshape(v[0], 3, 4); }, {{2, 6}}},
      {"remap", [](Tape&, std::vector<Var>& v) { return ad::remap(v[0], 2, 3, {0, 5, -1, 5, 2, 1}); }, {{2, 3}}},
      {"gather_rows", [](Tape&, std::vector<Var>& v) { return ad::gather_rows(v[0], {2, 0, 2}); }, {{3, 2}}},
      {"mean_rows", [](Tape&, std::vector<Var>& v) { return ad::mean_rows(v[0]); }, {{5, 3}}},
      {"segment_mean", [](Tape&, std::vector<Var>& v) { return ad::segment_mean(v[0], {{0, 3}, {1, 2, 4}}); }, {{5, 2}}},
      {"replace_rows", [](Tape&, std::vector<Var>& v) { return ad::replace_rows(v[0], v[1], {0, 2}); }, {{4, 3}, {1, 3}}},
      {"broadcast_rows", [](Tape&, std::vector<Var>& v) { return ad::broadcast_rows(v[0], 4); }, {{1, 3}}},
      {"sum", [](Tape&, std::vector<Var>& v) { return ad::sum(v[0]); }, {{3, 3}}},
  };
  return cases;
}

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto& c = op_cases()[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(100 + static_cast<std::uint64_t>(GetParam()));
  std::vector<Matrix> inputs;
  for (auto [r, k] : c.shapes) inputs.push_back(random_matrix(rng, r, k));
  EXPECT_LT(max_relative_error(c.op, inputs, rng), 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 24),
                         [](const ::testing::TestParamInfo<int>& info) {
                           return std::string(op_cases()[static_cast<std::size_t>(info.param)].name);
                         });

TEST(Autodiff, MseGradient) {
  std::mt19937_64 rng(3);
  const Matrix target = random_matrix(rng, 4, 2);
  const Op op = [&](Tape&, std::vector<Var>& v) { return ad::mse(v[0], target); };
  EXPECT_LT(max_relative_error(op, {random_matrix(rng, 4, 2)}, rng, true), 1e-6);
}

TEST(Autodiff, ReusedNodeAccumulates) {
  ad::ParameterStore empty;
  Tape t(empty);
  const Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  const Var y = ad::add(ad::mul(x, x), x);  // x^2 + x
  t.backward(ad::sum(y));
  EXPECT_EQ(t.grad(x.id)(0, 0), 7.0);
}

TEST(Autodiff, ParameterGradientsAccumulateIntoStore) {
  ad::ParameterStore ps;
  std::mt19937_64 rng(4);
  const auto lin = nn::Linear::create(ps, "l", 3, 2, rng);
  Tape t(ps);
  const Matrix x = random_matrix(rng, 5, 3);
  t.backward(ad::sum(lin(t, t.constant(x))));
  ad::Gradients g(ps.size());
  t.accumulate(g);
  // d sum(xW + b) / dW = x^T 1, / db = rows.
  const Matrix expect_w = x.transpose() * Matrix::Ones(5, 2);
  EXPECT_LT((g[lin.weight] - expect_w).norm(), 1e-12);
  EXPECT_EQ(g[lin.bias], Matrix::Constant(1, 2, 5.0));
  ad::Gradients twice = g;
  ad::add_into(twice, g);
  EXPECT_EQ(twice[lin.weight], 2 * g[lin.weight]);
}

TEST(Layers, TransformerBlockInputGradient) {
  ad::ParameterStore ps;
  std::mt19937_64 rng(6);
  const auto block = nn::TransformerBlock::create(ps, "b", 4, 2, 8, rng);
  const Matrix x0 = random_matrix(rng, 3, 4);
  const Matrix w = random_matrix(rng, 3, 4);
  auto run = [&](const Matrix& x, Matrix* grad) {
    Tape t(ps, grad != nullptr);
    const Var xv = t.variable(x);
    const Var loss = ad::sum(ad::mul(block(t, xv), t.constant(w)));
    if (grad) {
      t.backward(loss);
      *grad = t.grad(xv.id);
    }
    return loss.value()(0, 0);
  };
  Matrix g;
  run(x0, &g);
  double worst = 0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Matrix p = x0, m = x0;
    p.data()[i] += 1e-6;
    m.data()[i] -= 1e-6;
    const double num = (run(p, nullptr) - run(m, nullptr)) / 2e-6;
    worst = std::max(worst, std::abs(num - g.data()[i]) / std::max({std::abs(num), std::abs(g.data()[i]), 1e-6}));
  }
  EXPECT_LT(worst, 1e-5);
}
