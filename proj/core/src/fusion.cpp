#include "unic/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unic/error.hpp"

namespace unic {

std::vector<int> training_mask_rows(int total_rows, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw_usage_error("mask ratio must be in [0, 1]");
  const int count = static_cast<int>(std::floor(ratio * total_rows));
  std::vector<int> rows(static_cast<std::size_t>(total_rows));
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, total_rows - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
  }
  rows.resize(static_cast<std::size_t>(count));
  std::sort(rows.begin(), rows.end());
  return rows;
}

MaskedTokens apply_training_mask(Var tokens, double ratio, Var mask_token, std::uint64_t seed) {
  auto rows = training_mask_rows(static_cast<int>(tokens.rows()), ratio, seed);
  if (rows.empty()) return {tokens, {}};
  Var out = ad::replace_rows(tokens, mask_token, rows);
  return {out, std::move(rows)};
}

Var substitute_missing(ad::Tape&, const std::array<std::optional<Var>, kModalityCount>& tokens,
                       const ModalityPresence& presence, Var filler, int tokens_per_modality) {
  if (!presence.any()) throw_usage_error("at least one modality must be present");
  std::vector<Var> parts;
  for (int m = 0; m < kModalityCount; ++m) {
    const auto& slot = tokens[static_cast<std::size_t>(m)];
    if (presence.has(static_cast<Modality>(m))) {
      if (!slot) throw std::logic_error("present modality " + to_string(static_cast<Modality>(m)) + " has no tokens");
      if (slot->rows() != tokens_per_modality) throw std::logic_error("modality token count mismatch");
      parts.push_back(*slot);
    } else {
      parts.push_back(ad::broadcast_rows(filler, tokens_per_modality));
    }
  }
  return ad::concat_rows(parts);
}

// ---- trunk ------------------------------------------------------------------

FusionTrunk FusionTrunk::create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  FusionTrunk f;
  f.tokens_ = cfg.tokens;
  f.d_ = cfg.token_dim;
  f.mask_token_ = ps.add("fusion.mask_token", nn::randn(rng, 1, f.d_, 0.02));
  f.position_ = ps.add("fusion.position", nn::randn(rng, kModalityCount * f.tokens_, f.d_, 0.02));
  f.modality_ = ps.add("fusion.modality", nn::randn(rng, kModalityCount, f.d_, 0.02));
  if (cfg.pooling == Pooling::Readout) f.readout_ = ps.add("fusion.readout", nn::randn(rng, 1, f.d_, 0.02));
  f.encoder_ =
      nn::TransformerEncoder::create(ps, "fusion.trunk", f.d_, cfg.trunk_depth, cfg.trunk_heads, cfg.ff_mult * f.d_, rng);
  return f;
}

Var FusionTrunk::embed(ad::Tape& t, Var sequence) const {
  if (sequence.rows() != kModalityCount * tokens_ || sequence.cols() != d_) {
    throw std::logic_error("trunk input must be 4T x D");
  }
  std::vector<int> slot_modality;
  for (int m = 0; m < kModalityCount; ++m) slot_modality.insert(slot_modality.end(), static_cast<std::size_t>(tokens_), m);
  const Var modality_rows = ad::gather_rows(t.parameter(modality_), std::move(slot_modality));
  return ad::add(ad::add(sequence, t.parameter(position_)), modality_rows);
}

Var FusionTrunk::layers(ad::Tape& t, Var embedded) const {
  Var pooled;
  if (readout_) {
    const Var parts[] = {embedded, t.parameter(*readout_)};
    const Var out = encoder_(t, ad::concat_rows(parts));
    pooled = ad::slice_rows(out, out.rows() - 1, 1);
  } else {
    pooled = ad::mean_rows(encoder_(t, embedded));
  }
  if (!pooled.value().allFinite()) throw_numeric_error("non-finite activation in fusion trunk");
  return pooled;
}

Var FusionTrunk::operator()(ad::Tape& t, Var sequence) const { return layers(t, embed(t, sequence)); }

// ---- heads ------------------------------------------------------------------

AffordanceHead AffordanceHead::create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  AffordanceHead h;
  h.d_ = cfg.token_dim;
  const int in = cfg.token_dim + 3;
  h.first_weight_ = ps.add("head.0.weight", nn::randn(rng, in, cfg.head_hidden, 1.0 / std::sqrt(in)));
  h.first_bias_ = ps.add("head.0.bias", ad::Matrix::Zero(1, cfg.head_hidden));
  for (int i = 1; i < cfg.head_layers; ++i) {
    h.hidden_.push_back(nn::Linear::create(ps, "head." + std::to_string(i), cfg.head_hidden, cfg.head_hidden, rng));
  }
  h.out_ = nn::Linear::create(ps, "head.out", cfg.head_hidden, 1, rng);
  return h;
}

Var AffordanceHead::logits(ad::Tape& t, Var global, Var coords) const {
  if (!global.value().allFinite() || !coords.value().allFinite()) throw_numeric_error("non-finite head input");
  // [g | xyz] * W == g * W_g + xyz * W_xyz: the global half is computed once
  // per sample instead of once per point.
  const Var w = t.parameter(first_weight_);
  const Var per_sample = ad::linear(global, ad::slice_rows(w, 0, d_), t.parameter(first_bias_));
  Var x = ad::gelu(ad::add_row(ad::matmul(coords, ad::slice_rows(w, d_, 3)), per_sample));
  for (const auto& layer : hidden_) x = ad::gelu(layer(t, x));
  return out_(t, x);
}

Var AffordanceHead::operator()(ad::Tape& t, Var global, Var coords) const { return ad::tanh(logits(t, global, coords)); }

RegressionHead RegressionHead::create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  RegressionHead h;
  h.points_ = cfg.regression_points;
  h.mlp_ = nn::Mlp::create(ps, "regression", cfg.token_dim, {cfg.head_hidden, cfg.head_hidden, 3 * cfg.regression_points},
                           rng, /*activate_last=*/false);
  return h;
}

Var RegressionHead::operator()(ad::Tape& t, Var global) const {
  return ad::reshape(mlp_(t, global), points_, 3);
}

}  // namespace unic
