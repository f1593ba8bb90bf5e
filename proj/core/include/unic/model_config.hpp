#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace unic {

/// Token slots are laid out in this order: rows [m*T, (m+1)*T) belong to modality m.
enum class Modality { PointCloud = 0, Rotation = 1, Wrench = 2, Tactile = 3 };
inline constexpr int kModalityCount = 4;

std::string to_string(Modality m);

/// Which sensors are available at inference time.
struct ModalityPresence {
  bool pointcloud = true;
  bool rotation = true;
  bool wrench = true;
  bool tactile = true;

  bool has(Modality m) const;
  bool any() const { return pointcloud || rotation || wrench || tactile; }

  static ModalityPresence all() { return {}; }
  /// Parses a comma-separated drop list such as "tac,ft" or "rotation".
  static ModalityPresence dropping(const std::string& drop_list);
  friend bool operator==(const ModalityPresence&, const ModalityPresence&) = default;
};

/// The five presence patterns of the modality-removal matrix, with their
/// report labels: All, Rotation, Tac, FT, FT & Tac (label = what was removed).
struct PresencePattern {
  std::string label;
  ModalityPresence presence;
};
std::vector<PresencePattern> removal_patterns();

/// unic: masked fusion. no_mask: same graph trained with ratio 0. e2e: regresses
/// L contact points directly. visual: point cloud + rotation only.
enum class Variant { Unic, NoMask, E2E, Visual };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class Pooling { Mean, Readout };

struct ModelConfig {
  Variant variant = Variant::Unic;
  int token_dim = 32;   // D
  int tokens = 4;       // T per modality
  int patch = 4;        // P
  int tactile_h = 8;
  int tactile_w = 8;
  int tactile_depth = 2;
  int tactile_heads = 2;
  int trunk_depth = 2;
  int trunk_heads = 2;
  int ff_mult = 4;
  std::vector<int> point_widths{32, 64};
  int mlp_hidden = 32;
  int head_hidden = 64;
  int head_layers = 2;
  int points = 1024;      // M fed to the point encoder
  int regression_points = 32;  // L, e2e only
  double mask_ratio = 0.5;
  Pooling pooling = Pooling::Mean;
  double coord_scale = 10.0;   // normalized coords = (p - centroid) * coord_scale
  double force_scale = 0.1;    // per N
  double torque_scale = 1.0;   // per N*m
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  /// Patches per fingertip after zero-padding to multiples of P.
  int patches_per_finger() const;
  /// Whether absent modalities receive the mask token (true) or zeros.
  bool substitutes_mask_token() const { return variant == Variant::Unic || variant == Variant::Visual; }
};

}  // namespace unic
