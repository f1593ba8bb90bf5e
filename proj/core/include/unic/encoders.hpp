#pragma once

#include <random>
#include <vector>

#include "unic/layers.hpp"
#include "unic/model_config.hpp"
#include "unic/synth.hpp"

namespace unic {

using ad::Matrix;
using ad::Var;

/// Balanced output of one modality encoder: T x D.
struct TokenMatrix {
  Modality modality = Modality::PointCloud;
  Matrix tokens;
};

// Input conditioning, outside the differentiable graph.

/// H x 2W matrix laid out like TactileMap::data.
Matrix tactile_matrix(const TactileMap& map);
/// 1 x 4 unit quaternion with w >= 0. Throws on a zero or non-finite quaternion.
Matrix rotation_input(const Quaternion& q);
/// 1 x 6 wrench with forces and torques rescaled. Throws on non-finite input.
Matrix wrench_input(const Wrench& w, const ModelConfig& cfg);
Matrix cloud_matrix(const PointCloud& cloud);

/// Patch transformer over marker displacement maps. Both fingertips share
/// the encoder; their token sequences are concatenated (left first) before
/// the balancing projection, so the aggregation is ordered.
class TactileEncoder {
 public:
  static TactileEncoder create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

  Var operator()(ad::Tape& t, Var left, Var right) const;
  /// Non-overlapping P x P patches of one H x 2W map, zero-padded: patches x (P*P*2).
  Var patchify(ad::Tape& t, Var map) const;
  /// Patch embedding + positional terms + transformer: patches x D.
  Var encode_finger(ad::Tape& t, Var map) const;

  int patch_count() const { return patch_rows_ * patch_cols_; }

 private:
  int h_ = 0, w_ = 0, p_ = 0, d_ = 0, tokens_ = 0;
  int patch_rows_ = 0, patch_cols_ = 0;
  nn::Linear embed_;
  ad::ParamId position_ = 0;
  nn::TransformerEncoder encoder_;
  nn::Linear balance_;
  std::vector<int> patch_index_;
};

/// Lightweight MLP over a small vector, reshaped to T x D by a linear projection.
class VectorEncoder {
 public:
  static VectorEncoder create(ad::ParameterStore& ps, const std::string& name, int in, const ModelConfig& cfg,
                              std::mt19937_64& rng);
  Var operator()(ad::Tape& t, Var x) const;

 private:
  nn::Mlp mlp_;
  nn::Linear balance_;
  int tokens_ = 0, d_ = 0;
};

/// Shared per-point MLP, mean-pooled over T fixed random subsets of the
/// points, then projected to D.
class PointEncoder {
 public:
  static PointEncoder create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

  /// 1 x 3 centroid of an M x 3 cloud.
  Var center(ad::Tape& t, Var cloud) const;
  /// (cloud - center) * coord_scale.
  Var normalize(ad::Tape& t, Var cloud, Var center) const;
  Var per_point(ad::Tape& t, Var normalized) const;
  /// M x 3 raw cloud -> T x D.
  Var operator()(ad::Tape& t, Var cloud, Var center) const;

  const std::vector<std::vector<int>>& subsets() const { return subsets_; }

 private:
  nn::Mlp mlp_;
  nn::Linear project_;
  std::vector<std::vector<int>> subsets_;
  int points_ = 0;
  double coord_scale_ = 1.0;
};

}  // namespace unic
