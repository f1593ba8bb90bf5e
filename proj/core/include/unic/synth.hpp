#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unic/geometry.hpp"
#include "unic/labelgen.hpp"

namespace unic {

enum class ObjectKind { Stick, Box, LShape };
enum class ContactMode { None, Point, Line, Patch, Chained };

std::string to_string(ObjectKind kind);
std::string to_string(ContactMode mode);
ObjectKind object_kind_from_string(const std::string& s);
ContactMode contact_mode_from_string(const std::string& s);

/// Camera placement: uniform over a spherical cap above the workspace.
struct CameraConfig {
  double radius_min = 0.45;
  double radius_max = 0.65;
  double polar_min_deg = 20.0;
  double polar_max_deg = 55.0;
  double target_jitter = 0.02;
};

struct NoiseConfig {
  double point = 0.001;    // m
  double force = 0.1;      // N
  double torque = 0.01;    // N*m
  double tactile = 0.02;   // marker units
};

/// Heuristic gel response: uniform shear from the tangential load plus a
/// rotational field from twist about the gel normal.
struct TactileModel {
  double shear_gain = 0.04;     // marker units per N
  double twist_gain = 0.15;     // marker units per N*m
  double envelope_sigma = 0.6;  // in normalized grid units
};

struct ForceModel {
  double normal_min = 1.0;   // N
  double normal_max = 20.0;  // N
  double friction = 0.3;     // max tangential / normal ratio
};

struct SceneConfig {
  ObjectKind object = ObjectKind::Stick;
  // stick: (width, width, length); box: (x, y, z); L-shape: (bar width, foot length, bar length)
  Eigen::Vector3d dims{0.015, 0.015, 0.14};
  double dim_jitter = 0.15;
  ContactMode mode = ContactMode::Point;
  Eigen::Vector3d second_object_dims{0.06, 0.06, 0.04};
  double table_half_extent = 0.10;
  double placement_range = 0.04;
  double hover_min = 0.008;
  double hover_max = 0.03;
  CameraConfig camera;
  NoiseConfig noise;
  ForceModel force;
  TactileModel tactile;
  int frames = 10;
  int points = 1024;
  int tactile_h = 8;
  int tactile_w = 8;
  double rate_hz = 10.0;
  bool unseen = false;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON dump.
  std::uint64_t digest() const;
};

/// (H, W, 2) marker displacement field, row-major with the channel innermost.
struct TactileMap {
  int h = 0;
  int w = 0;
  std::vector<double> data;

  TactileMap() = default;
  TactileMap(int rows, int cols) : h(rows), w(cols), data(static_cast<std::size_t>(rows * cols * 2), 0.0) {}

  double& at(int i, int j, int c) { return data[static_cast<std::size_t>((i * w + j) * 2 + c)]; }
  double at(int i, int j, int c) const { return data[static_cast<std::size_t>((i * w + j) * 2 + c)]; }

  friend bool operator==(const TactileMap&, const TactileMap&) = default;
};

/// Fx, Fy, Fz, Tx, Ty, Tz in the wrist sensor frame.
using Wrench = std::array<double, 6>;

/// Unit quaternion stored (w, x, y, z).
using Quaternion = std::array<double, 4>;

struct FrameSample {
  PointCloud cloud;
  Quaternion rotation{1.0, 0.0, 0.0, 0.0};
  Wrench wrench{};
  TactileMap tactile_left;
  TactileMap tactile_right;
  ContactAnnotation annotation;
  bool contact = false;

  /// Throws a data error if a FrameSample invariant is violated.
  void validate() const;
};

struct Episode {
  std::string id;
  ContactMode mode = ContactMode::None;
  ObjectKind object = ObjectKind::Stick;
  bool unseen = false;
  double rate_hz = 10.0;
  std::uint64_t config_digest = 0;
  ContactAnnotation annotation;
  std::vector<FrameSample> frames;

  bool contact() const noexcept { return annotation.is_contact(); }
  std::size_t points_per_frame() const { return frames.empty() ? 0 : frames.front().cloud.size(); }
};

/// One planar rectangular surface: origin + s*u + t*v for s, t in [0, 1].
/// The outward normal is u x v.
struct Quad {
  Point3 origin;
  Eigen::Vector3d u;
  Eigen::Vector3d v;

  Eigen::Vector3d normal() const { return u.cross(v).normalized(); }
  double area() const { return u.cross(v).norm(); }
  Point3 center() const { return origin + 0.5 * (u + v); }
};

struct SceneState {
  std::vector<Quad> faces;
};

/// The six outward-facing faces of a box with the given half extents,
/// posed by `pose` (box-local -> world).
std::vector<Quad> box_faces(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents,
                            const Eigen::Isometry3d& pose);

/// Camera extrinsic; the camera frame is x right, y down, z forward.
struct CameraPose {
  Eigen::Isometry3d world_from_camera = Eigen::Isometry3d::Identity();
};

CameraPose look_at(const Point3& eye, const Point3& target);
CameraPose sample_camera(const CameraConfig& cfg, std::uint64_t seed);

/// Area-uniform samples over camera-facing surfaces, in the camera frame,
/// with isotropic Gaussian jitter. Throws if nothing faces the camera.
PointCloud render_pointcloud(const SceneState& scene, const CameraPose& camera, std::size_t count,
                             double jitter, std::uint64_t seed);

/// Where and how the environment pushes on the grasped object.
struct ContactGeometry {
  Point3 point = Point3::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  Point3 wrist = Point3::Zero();
  Eigen::Matrix3d sensor_rotation = Eigen::Matrix3d::Identity();  // sensor -> world
};

/// Wrist wrench from a world-frame contact force: force and lever-arm torque,
/// both expressed in the sensor frame.
Wrench wrench_from_force(const ContactGeometry& geometry, const Eigen::Vector3d& force_world);

struct WrenchSample {
  Wrench measured{};
  Wrench noiseless{};
  double normal_force = 0.0;  // noiseless, along the contact normal
};

WrenchSample synth_wrench(bool contact, const ContactGeometry& geometry, const ForceModel& force,
                          const NoiseConfig& noise, std::uint64_t seed);

struct TactilePair {
  TactileMap left;
  TactileMap right;
};

/// Marker displacement maps for both fingertips. Gels lie in the sensor x-z
/// plane; the left gel normal is +y and the right one -y.
TactilePair synth_tactile(bool contact, const Wrench& noiseless_wrench, const TactileModel& model, int h, int w,
                          double noise, std::uint64_t seed);

/// Generator-side values that never reach the model.
struct FrameTrace {
  double normal_force = 0.0;
  Wrench noiseless_wrench{};
  Point3 wrist_world = Point3::Zero();
};

struct EpisodeTrace {
  CameraPose camera;
  std::vector<FrameTrace> frames;
};

/// Deterministic in (cfg, seed). Contact episodes keep the annotation fixed
/// while pose and load vary; no-contact episodes hover freely.
Episode generate_episode(const SceneConfig& cfg, std::uint64_t seed, EpisodeTrace* trace = nullptr);

/// Round every tensor to float32 precision in place.
void quantize_to_float(FrameSample& frame);

/// Episode recipe used to synthesize a mixed dataset.
struct DatasetRecipe {
  struct Entry {
    SceneConfig scene;
    double weight = 1.0;
  };
  std::vector<Entry> entries;
  int episodes = 100;

  nlohmann::json to_json() const;
  static DatasetRecipe from_json(const nlohmann::json& j);
};

/// Balanced mix of every contact mode and primitive.
DatasetRecipe default_recipe(int episodes, int frames, int points);

/// Episode i of the dataset is drawn from the recipe with a seed derived from
/// (seed, i).
std::vector<Episode> generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed);

}  // namespace unic
