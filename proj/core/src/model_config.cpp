#include "unic/model_config.hpp"

#include <sstream>

#include "unic/error.hpp"

namespace unic {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::PointCloud: return "pointcloud";
    case Modality::Rotation: return "rotation";
    case Modality::Wrench: return "wrench";
    case Modality::Tactile: return "tactile";
  }
  return "pointcloud";
}

bool ModalityPresence::has(Modality m) const {
  switch (m) {
    case Modality::PointCloud: return pointcloud;
    case Modality::Rotation: return rotation;
    case Modality::Wrench: return wrench;
    case Modality::Tactile: return tactile;
  }
  return false;
}

ModalityPresence ModalityPresence::dropping(const std::string& drop_list) {
  ModalityPresence p;
  std::stringstream ss(drop_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "rotation" || item == "rot") p.rotation = false;
    else if (item == "tac" || item == "tactile") p.tactile = false;
    else if (item == "ft" || item == "wrench") p.wrench = false;
    else if (item == "pc" || item == "pointcloud") p.pointcloud = false;
    else throw_usage_error("unknown modality '" + item + "' in drop list");
  }
  if (!p.any()) throw_usage_error("at least one modality must remain");
  return p;
}

std::vector<PresencePattern> removal_patterns() {
  return {
      {"All", ModalityPresence::all()},
      {"Rotation", ModalityPresence::dropping("rotation")},
      {"Tac", ModalityPresence::dropping("tac")},
      {"FT", ModalityPresence::dropping("ft")},
      {"FT & Tac", ModalityPresence::dropping("ft,tac")},
  };
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Unic: return "unic";
    case Variant::NoMask: return "no-mask";
    case Variant::E2E: return "e2e";
    case Variant::Visual: return "visual";
  }
  return "unic";
}

Variant variant_from_string(const std::string& s) {
  if (s == "unic") return Variant::Unic;
  if (s == "no-mask") return Variant::NoMask;
  if (s == "e2e") return Variant::E2E;
  if (s == "visual") return Variant::Visual;
  throw_usage_error("unknown model variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (token_dim < 1 || tokens < 1) throw_usage_error("token dim and token count must be positive");
  if (patch < 1 || tactile_h < 1 || tactile_w < 1) throw_usage_error("bad tactile geometry");
  if (token_dim % tactile_heads != 0 || token_dim % trunk_heads != 0) {
    throw_usage_error("token dim must be divisible by the head counts");
  }
  if (point_widths.empty() || mlp_hidden < 1 || head_hidden < 1 || head_layers < 1) {
    throw_usage_error("bad layer widths");
  }
  if (points < 1 || points < tokens) throw_usage_error("point count must be at least the token count");
  if (regression_points < 1) throw_usage_error("regression point count must be positive");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw_usage_error("mask ratio must be in [0, 1]");
  if (!(coord_scale > 0.0)) throw_usage_error("coord scale must be positive");
}

int ModelConfig::patches_per_finger() const {
  const int nh = (tactile_h + patch - 1) / patch, nw = (tactile_w + patch - 1) / patch;
  return nh * nw;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"token_dim", token_dim},
          {"tokens", tokens},
          {"patch", patch},
          {"tactile", {tactile_h, tactile_w}},
          {"tactile_depth", tactile_depth},
          {"tactile_heads", tactile_heads},
          {"trunk_depth", trunk_depth},
          {"trunk_heads", trunk_heads},
          {"ff_mult", ff_mult},
          {"point_widths", point_widths},
          {"mlp_hidden", mlp_hidden},
          {"head_hidden", head_hidden},
          {"head_layers", head_layers},
          {"points", points},
          {"regression_points", regression_points},
          {"mask_ratio", mask_ratio},
          {"pooling", pooling == Pooling::Mean ? "mean" : "readout"},
          {"coord_scale", coord_scale},
          {"force_scale", force_scale},
          {"torque_scale", torque_scale},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.token_dim = j.value("token_dim", c.token_dim);
    c.tokens = j.value("tokens", c.tokens);
    c.patch = j.value("patch", c.patch);
    if (j.contains("tactile")) {
      c.tactile_h = j.at("tactile").at(0).get<int>();
      c.tactile_w = j.at("tactile").at(1).get<int>();
    }
    c.tactile_depth = j.value("tactile_depth", c.tactile_depth);
    c.tactile_heads = j.value("tactile_heads", c.tactile_heads);
    c.trunk_depth = j.value("trunk_depth", c.trunk_depth);
    c.trunk_heads = j.value("trunk_heads", c.trunk_heads);
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    if (j.contains("point_widths")) c.point_widths = j.at("point_widths").get<std::vector<int>>();
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.head_layers = j.value("head_layers", c.head_layers);
    c.points = j.value("points", c.points);
    c.regression_points = j.value("regression_points", c.regression_points);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    if (j.contains("pooling")) {
      const auto p = j.at("pooling").get<std::string>();
      if (p != "mean" && p != "readout") throw_usage_error("pooling must be 'mean' or 'readout'");
      c.pooling = p == "mean" ? Pooling::Mean : Pooling::Readout;
    }
    c.coord_scale = j.value("coord_scale", c.coord_scale);
    c.force_scale = j.value("force_scale", c.force_scale);
    c.torque_scale = j.value("torque_scale", c.torque_scale);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw_usage_error(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace unic
