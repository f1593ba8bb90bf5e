#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "unic/layers.hpp"
#include "unic/model_config.hpp"

namespace unic {

using ad::Var;

/// Rows chosen for random masking: floor(ratio * total) distinct rows drawn
/// uniformly over the whole concatenated sequence, sorted ascending.
std::vector<int> training_mask_rows(int total_rows, double ratio, std::uint64_t seed);

struct MaskedTokens {
  Var tokens;
  std::vector<int> masked_rows;
};

/// Replaces randomly selected rows of the stacked 4T x D token matrix with
/// the mask token (1 x D).
MaskedTokens apply_training_mask(Var tokens, double ratio, Var mask_token, std::uint64_t seed);

/// Builds the full 4T x D sequence. Absent modalities fill their fixed slots
/// with T copies of `filler` (the mask token, or zeros for models trained
/// without masking). Throws when nothing is present.
Var substitute_missing(ad::Tape& t, const std::array<std::optional<Var>, kModalityCount>& tokens,
                       const ModalityPresence& presence, Var filler, int tokens_per_modality);

/// Modality-agnostic transformer over the fused sequence.
class FusionTrunk {
 public:
  static FusionTrunk create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

  /// Adds learned position and modality embeddings to every slot.
  Var embed(ad::Tape& t, Var sequence) const;
  /// Transformer layers and pooling on an already embedded sequence -> 1 x D.
  Var layers(ad::Tape& t, Var embedded) const;
  /// embed + layers. Throws a numeric error on NaN activations.
  Var operator()(ad::Tape& t, Var sequence) const;

  ad::ParamId mask_token() const { return mask_token_; }

 private:
  int tokens_ = 0, d_ = 0;
  ad::ParamId mask_token_ = 0;
  ad::ParamId position_ = 0;
  ad::ParamId modality_ = 0;
  std::optional<ad::ParamId> readout_;
  nn::TransformerEncoder encoder_;
};

/// Per-point scorer: the global feature is broadcast to every sample point,
/// concatenated with its normalized coordinates and squashed into (-1, 1).
class AffordanceHead {
 public:
  static AffordanceHead create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);

  /// global: 1 x D, coords: Q x 3 (normalized) -> Q x 1.
  Var operator()(ad::Tape& t, Var global, Var coords) const;
  /// Pre-activation of the output unit; operator() is tanh of this.
  Var logits(ad::Tape& t, Var global, Var coords) const;

  ad::ParamId first_weight() const { return first_weight_; }
  ad::ParamId first_bias() const { return first_bias_; }
  const std::vector<nn::Linear>& hidden() const { return hidden_; }
  const nn::Linear& output() const { return out_; }

 private:
  int d_ = 0;
  ad::ParamId first_weight_ = 0;  // (D + 3) x hidden, global rows first
  ad::ParamId first_bias_ = 0;
  std::vector<nn::Linear> hidden_;
  nn::Linear out_;
};

/// E2E baseline: global feature -> L x 3 points in normalized coordinates.
class RegressionHead {
 public:
  static RegressionHead create(ad::ParameterStore& ps, const ModelConfig& cfg, std::mt19937_64& rng);
  Var operator()(ad::Tape& t, Var global) const;

 private:
  nn::Mlp mlp_;
  int points_ = 0;
};

}  // namespace unic
