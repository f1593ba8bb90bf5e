#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "unic/encoders.hpp"
#include "unic/fusion.hpp"
#include "unic/labelgen.hpp"

namespace unic {

/// Network-ready tensors for one frame.
struct FrameInputs {
  Matrix cloud;     // M x 3, camera frame
  Matrix rotation;  // 1 x 4
  Matrix wrench;    // 1 x 6, rescaled
  Matrix tactile_left;
  Matrix tactile_right;
};

FrameInputs make_inputs(const FrameSample& frame, const ModelConfig& cfg);

struct ForwardOptions {
  ModalityPresence presence;
  double mask_ratio = 0.0;  // random training mask, 0 at deployment
  std::uint64_t mask_seed = 0;
  /// Sample points for the affordance head (raw camera-frame coordinates).
  /// Defaults to the encoder cloud.
  const Matrix* query = nullptr;
};

struct ForwardResult {
  Var sequence;  // 4T x D trunk input after substitution and masking, before embeddings
  Var global;    // 1 x D
  Var center;    // 1 x 3 centroid of the encoder cloud
  /// Q x 1 affordance in (-1, 1), or for e2e L x 3 points in camera
  /// coordinates multiplied by coord_scale.
  Var output;
  Var logit;  // Q x 1 pre-tanh head output (affordance head only)
  std::vector<int> masked_rows;
};

class UnicModel {
 public:
  /// Initializes every parameter from cfg.seed.
  explicit UnicModel(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  ad::ParameterStore& params() noexcept { return params_; }
  const ad::ParameterStore& params() const noexcept { return params_; }

  /// Presence after the variant's own restrictions (visual never sees wrench or tactile).
  ModalityPresence effective_presence(const ModalityPresence& requested) const;

  /// Tokens of every present modality; absent ones are skipped entirely.
  std::array<std::optional<Var>, kModalityCount> encode(ad::Tape& t, const FrameInputs& in,
                                                        const ModalityPresence& presence) const;
  /// The trunk input: substitution of absent modalities, then optional random masking.
  MaskedTokens fuse(ad::Tape& t, const std::array<std::optional<Var>, kModalityCount>& tokens,
                    const ModalityPresence& presence, double mask_ratio, std::uint64_t mask_seed) const;

  ForwardResult forward(ad::Tape& t, const FrameInputs& in, const ForwardOptions& opt) const;

  /// Eval-mode affordance map over the frame's own cloud.
  AffordanceMap predict_affordance(const FrameSample& frame, const ModalityPresence& presence) const;
  /// e2e only: L regressed contact points in the camera frame.
  PointCloud predict_points(const FrameSample& frame, const ModalityPresence& presence) const;

  bool regresses_points() const noexcept { return cfg_.variant == Variant::E2E; }

  const TactileEncoder& tactile_encoder() const { return tactile_; }
  const VectorEncoder& rotation_encoder() const { return rotation_; }
  const VectorEncoder& wrench_encoder() const { return wrench_; }
  const PointEncoder& point_encoder() const { return points_; }
  const FusionTrunk& trunk() const { return trunk_; }
  const AffordanceHead& head() const { return head_; }

 private:
  ModelConfig cfg_;
  ad::ParameterStore params_;
  TactileEncoder tactile_;
  VectorEncoder rotation_;
  VectorEncoder wrench_;
  PointEncoder points_;
  FusionTrunk trunk_;
  AffordanceHead head_;
  std::optional<RegressionHead> regression_;
};

// Single-modality conveniences that run one encoder on a fresh inference tape.
TokenMatrix encode_tactile(const UnicModel& model, const TactileMap& left, const TactileMap& right);
TokenMatrix encode_rotation(const UnicModel& model, const Quaternion& q);
TokenMatrix encode_wrench(const UnicModel& model, const Wrench& w);
TokenMatrix encode_pointcloud(const UnicModel& model, const PointCloud& cloud);
/// Embeddings, transformer and pooling on a 4T x D sequence -> 1 x D.
Matrix trunk_forward(const UnicModel& model, const Matrix& sequence);
/// Per-point affordance for a global feature and raw sample points, normalized
/// around `center`.
AffordanceMap head_forward(const UnicModel& model, const Matrix& global, const PointCloud& sample_points,
                           const Point3& center);
AffordanceMap predict_frame(const FrameSample& frame, const ModalityPresence& presence, const UnicModel& model);

enum class TensorPrecision { F32, F64 };

std::vector<std::uint8_t> encode_checkpoint(const UnicModel& model, TensorPrecision precision = TensorPrecision::F32);
UnicModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const UnicModel& model, const std::filesystem::path& path,
                     TensorPrecision precision = TensorPrecision::F32);
UnicModel load_checkpoint(const std::filesystem::path& path);

}  // namespace unic
