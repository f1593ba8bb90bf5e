#include "unic/encoders.hpp"

#include <cmath>
#include <numeric>

#include "unic/error.hpp"
#include "unic/random.hpp"

namespace unic {

Matrix tactile_matrix(const TactileMap& map) {
  if (map.data.size() != static_cast<std::size_t>(map.h * map.w * 2)) throw_data_error("tactile shape mismatch");
  return Eigen::Map<const Matrix>(map.data.data(), map.h, 2 * map.w);
}

Matrix rotation_input(const Quaternion& q) {
  Matrix m(1, 4);
  for (int i = 0; i < 4; ++i) m(0, i) = q[static_cast<std::size_t>(i)];
  const double n = m.norm();
  if (!std::isfinite(n)) throw_data_error("non-finite rotation quaternion");
  if (n < 1e-12) throw_data_error("zero rotation quaternion");
  m /= n;
  if (m(0, 0) < 0.0) m = -m;
  return m;
}

Matrix wrench_input(const Wrench& w, const ModelConfig& cfg) {
  Matrix m(1, 6);
  for (int i = 0; i < 6; ++i) {
    const double v = w[static_cast<std::size_t>(i)];
    if (!std::isfinite(v)) throw_data_error("non-finite wrench");
    m(0, i) = v * (i < 3 ? cfg.force_scale : cfg.torque_scale);
  }
  return m;
}

Matrix cloud_matrix(const PointCloud& cloud) {
  Matrix m(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = cloud[i].transpose();
  return m;
}

// ---- tactile ----------------------------------------------------------------

TactileEncoder TactileEncoder::create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  TactileEncoder e;
  e.h_ = cfg.tactile_h;
  e.w_ = cfg.tactile_w;
  e.p_ = cfg.patch;
  e.d_ = cfg.token_dim;
  e.tokens_ = cfg.tokens;
  e.patch_rows_ = (e.h_ + e.p_ - 1) / e.p_;
  e.patch_cols_ = (e.w_ + e.p_ - 1) / e.p_;
  const int patch_dim = e.p_ * e.p_ * 2;
  e.embed_ = nn::Linear::create(ps, "tactile.embed", patch_dim, e.d_, rng);
  e.position_ = ps.add("tactile.position", nn::randn(rng, e.patch_count(), e.d_, 0.02));
  e.encoder_ =
      nn::TransformerEncoder::create(ps, "tactile.encoder", e.d_, cfg.tactile_depth, cfg.tactile_heads, cfg.ff_mult * e.d_, rng);
  e.balance_ = nn::Linear::create(ps, "tactile.balance", 2 * e.patch_count() * e.d_, e.tokens_ * e.d_, rng);

  // Flat source index of every (patch, in-patch offset, channel) slot; -1 is padding.
  e.patch_index_.reserve(static_cast<std::size_t>(e.patch_count() * patch_dim));
  for (int a = 0; a < e.patch_rows_; ++a) {
    for (int b = 0; b < e.patch_cols_; ++b) {
      for (int di = 0; di < e.p_; ++di) {
        for (int dj = 0; dj < e.p_; ++dj) {
          const int i = a * e.p_ + di, j = b * e.p_ + dj;
          for (int c = 0; c < 2; ++c) e.patch_index_.push_back(i < e.h_ && j < e.w_ ? (i * e.w_ + j) * 2 + c : -1);
        }
      }
    }
  }
  return e;
}

Var TactileEncoder::patchify(ad::Tape&, Var map) const {
  if (map.rows() != h_ || map.cols() != 2 * w_) throw_data_error("tactile map shape does not match the model");
  return ad::remap(map, patch_count(), p_ * p_ * 2, patch_index_);
}

Var TactileEncoder::encode_finger(ad::Tape& t, Var map) const {
  const Var tokens = ad::add(embed_(t, patchify(t, map)), t.parameter(position_));
  return encoder_(t, tokens);
}

Var TactileEncoder::operator()(ad::Tape& t, Var left, Var right) const {
  const Var seq[] = {encode_finger(t, left), encode_finger(t, right)};
  const Var flat = ad::reshape(ad::concat_rows(seq), 1, 2 * patch_count() * d_);
  return ad::reshape(balance_(t, flat), tokens_, d_);
}

// ---- rotation / wrench ------------------------------------------------------

VectorEncoder VectorEncoder::create(ad::ParameterStore& ps, const std::string& name, int in, const ModelConfig& cfg,
                                    std::mt19937_64& rng) {
  VectorEncoder e;
  e.tokens_ = cfg.tokens;
  e.d_ = cfg.token_dim;
  e.mlp_ = nn::Mlp::create(ps, name + ".mlp", in, {cfg.mlp_hidden, cfg.mlp_hidden}, rng);
  e.balance_ = nn::Linear::create(ps, name + ".balance", cfg.mlp_hidden, cfg.tokens * cfg.token_dim, rng);
  return e;
}

Var VectorEncoder::operator()(ad::Tape& t, Var x) const {
  return ad::reshape(balance_(t, mlp_(t, x)), tokens_, d_);
}

// ---- point cloud ------------------------------------------------------------

PointEncoder PointEncoder::create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  PointEncoder e;
  e.points_ = cfg.points;
  e.coord_scale_ = cfg.coord_scale;
  e.mlp_ = nn::Mlp::create(ps, "points.mlp", 3, cfg.point_widths, rng);
  e.project_ = nn::Linear::create(ps, "points.project", cfg.point_widths.back(), cfg.token_dim, rng);

  // Seeded random partition into T contiguous chunks of a permutation.
  std::vector<int> perm(static_cast<std::size_t>(cfg.points));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 prng(derive_seed(cfg.seed, {0x706f696e74ULL}));
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(prng)]);
  }
  e.subsets_.resize(static_cast<std::size_t>(cfg.tokens));
  for (int s = 0; s < cfg.tokens; ++s) {
    const int lo = s * cfg.points / cfg.tokens, hi = (s + 1) * cfg.points / cfg.tokens;
    e.subsets_[static_cast<std::size_t>(s)].assign(perm.begin() + lo, perm.begin() + hi);
  }
  return e;
}

Var PointEncoder::center(ad::Tape&, Var cloud) const { return ad::mean_rows(cloud); }

Var PointEncoder::normalize(ad::Tape&, Var cloud, Var center) const {
  return ad::scale(ad::sub_row(cloud, center), coord_scale_);
}

Var PointEncoder::per_point(ad::Tape& t, Var normalized) const { return mlp_(t, normalized); }

Var PointEncoder::operator()(ad::Tape& t, Var cloud, Var center) const {
  if (cloud.rows() != points_ || cloud.cols() != 3) {
    throw_data_error("point encoder expects " + std::to_string(points_) + " points, got " +
                     std::to_string(cloud.rows()));
  }
  const Var features = per_point(t, normalize(t, cloud, center));
  return project_(t, ad::segment_mean(features, subsets_));
}

}  // namespace unic
