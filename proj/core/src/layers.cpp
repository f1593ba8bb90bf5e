#include "unic/layers.hpp"

#include <cmath>

namespace unic::nn {

Matrix randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Linear Linear::create(ParameterStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                      double gain) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = ps.add(name + ".weight", randn(rng, in, out, gain / std::sqrt(static_cast<double>(in))));
  l.bias = ps.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& t, Var x) const { return ad::linear(x, t.parameter(weight), t.parameter(bias)); }

LayerNorm LayerNorm::create(ParameterStore& ps, const std::string& name, int dim) {
  LayerNorm n;
  n.gain = ps.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = ps.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& t, Var x) const {
  return ad::layer_norm(x, t.parameter(gain), t.parameter(bias));
}

Mlp Mlp::create(ParameterStore& ps, const std::string& name, int in, const std::vector<int>& widths,
                std::mt19937_64& rng, bool activate_last) {
  Mlp m;
  m.activate_last = activate_last;
  int prev = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    m.layers.push_back(Linear::create(ps, name + "." + std::to_string(i), prev, widths[i], rng));
    prev = widths[i];
  }
  return m;
}

Var Mlp::operator()(Tape& t, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](t, x);
    if (activate_last || i + 1 < layers.size()) x = ad::gelu(x);
  }
  return x;
}

TransformerBlock TransformerBlock::create(ParameterStore& ps, const std::string& name, int dim, int heads,
                                          int ff_width, std::mt19937_64& rng) {
  TransformerBlock b;
  b.heads = heads;
  b.norm1 = LayerNorm::create(ps, name + ".norm1", dim);
  b.query = Linear::create(ps, name + ".query", dim, dim, rng);
  b.key = Linear::create(ps, name + ".key", dim, dim, rng);
  b.value = Linear::create(ps, name + ".value", dim, dim, rng);
  b.proj = Linear::create(ps, name + ".proj", dim, dim, rng, 0.5);
  b.norm2 = LayerNorm::create(ps, name + ".norm2", dim);
  b.ff1 = Linear::create(ps, name + ".ff1", dim, ff_width, rng);
  b.ff2 = Linear::create(ps, name + ".ff2", ff_width, dim, rng, 0.5);
  return b;
}

Var TransformerBlock::operator()(Tape& t, Var x) const {
  const Var h = norm1(t, x);
  const Var attended = ad::attention(query(t, h), key(t, h), value(t, h), heads);
  x = ad::add(x, proj(t, attended));
  const Var f = ff2(t, ad::gelu(ff1(t, norm2(t, x))));
  return ad::add(x, f);
}

TransformerEncoder TransformerEncoder::create(ParameterStore& ps, const std::string& name, int dim, int depth,
                                              int heads, int ff_width, std::mt19937_64& rng) {
  TransformerEncoder e;
  for (int i = 0; i < depth; ++i) {
    e.blocks.push_back(TransformerBlock::create(ps, name + ".block" + std::to_string(i), dim, heads, ff_width, rng));
  }
  e.final_norm = LayerNorm::create(ps, name + ".norm", dim);
  return e;
}

Var TransformerEncoder::operator()(Tape& t, Var x) const {
  for (const auto& b : blocks) x = b(t, x);
  return final_norm(t, x);
}

}  // namespace unic::nn
