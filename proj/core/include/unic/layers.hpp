#pragma once

#include <random>
#include <string>
#include <vector>

#include "unic/autodiff.hpp"

namespace unic::nn {

using ad::Matrix;
using ad::ParameterStore;
using ad::ParamId;
using ad::Tape;
using ad::Var;

/// N(0, stddev^2) initialized rows x cols matrix.
Matrix randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

struct Linear {
  ParamId weight = 0;  // in x out
  ParamId bias = 0;    // 1 x out
  int in = 0;
  int out = 0;

  static Linear create(ParameterStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng,
                       double gain = 1.0);
  Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
  ParamId gain = 0;
  ParamId bias = 0;

  static LayerNorm create(ParameterStore& ps, const std::string& name, int dim);
  Var operator()(Tape& t, Var x) const;
};

/// Linear layers with GELU after every layer (including the last when
/// `activate_last`).
struct Mlp {
  std::vector<Linear> layers;
  bool activate_last = true;

  static Mlp create(ParameterStore& ps, const std::string& name, int in, const std::vector<int>& widths,
                    std::mt19937_64& rng, bool activate_last = true);
  Var operator()(Tape& t, Var x) const;
  int out_dim() const { return layers.back().out; }
};

/// Pre-norm block: x + attn(ln(x)), then x + ff(ln(x)).
struct TransformerBlock {
  LayerNorm norm1;
  Linear query, key, value, proj;
  LayerNorm norm2;
  Linear ff1, ff2;
  int heads = 1;

  static TransformerBlock create(ParameterStore& ps, const std::string& name, int dim, int heads, int ff_width,
                                 std::mt19937_64& rng);
  Var operator()(Tape& t, Var x) const;
};

struct TransformerEncoder {
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

  static TransformerEncoder create(ParameterStore& ps, const std::string& name, int dim, int depth, int heads,
                                   int ff_width, std::mt19937_64& rng);
  Var operator()(Tape& t, Var x) const;
};

}  // namespace unic::nn
