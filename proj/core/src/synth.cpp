#include "unic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "unic/error.hpp"
#include "unic/random.hpp"

namespace unic {

namespace {

using Eigen::AngleAxisd;
using Eigen::Matrix3d;
using Eigen::Vector3d;

constexpr double kDeg = std::numbers::pi / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double random_sign(std::mt19937_64& rng) { return uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0; }

Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-9);
  return v.normalized();
}

// Axis-aligned box in the grasped object's local frame. The grasp point is
// the local origin and the object hangs along -z.
struct LocalBox {
  Vector3d center;
  Vector3d half;
};

std::vector<LocalBox> object_boxes(ObjectKind kind, const Vector3d& d) {
  switch (kind) {
    case ObjectKind::Stick:
    case ObjectKind::Box:
      return {{{0.0, 0.0, -0.5 * d.z()}, 0.5 * d}};
    case ObjectKind::LShape: {
      const double w = d.x(), foot = d.y(), len = d.z();
      return {{{0.0, 0.0, -0.5 * len}, {0.5 * w, 0.5 * w, 0.5 * len}},
              {{0.5 * foot, 0.0, -len + 0.5 * w}, {0.5 * foot, 0.5 * w, 0.5 * w}}};
    }
  }
  return {};
}

std::vector<Vector3d> box_vertices(const std::vector<LocalBox>& boxes) {
  std::vector<Vector3d> out;
  for (const auto& b : boxes) {
    for (int i = 0; i < 8; ++i) {
      const Vector3d s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
      out.push_back(b.center + s.cwiseProduct(b.half));
    }
  }
  return out;
}

double lowest_z(const std::vector<Vector3d>& local, const Matrix3d& r, const Vector3d& p) {
  double z = std::numeric_limits<double>::infinity();
  for (const auto& v : local) z = std::min(z, (r * v + p).z());
  return z;
}

// Index of the lowest vertex under rotation r.
std::size_t lowest_vertex(const std::vector<Vector3d>& local, const Matrix3d& r) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < local.size(); ++i) {
    if ((r * local[i]).z() < (r * local[best]).z()) best = i;
  }
  return best;
}

// Local vertices within tol of the lowest height under rotation r.
std::vector<Vector3d> lowest_vertices(const std::vector<Vector3d>& local, const Matrix3d& r, double tol) {
  const double zmin = (r * local[lowest_vertex(local, r)]).z();
  std::vector<Vector3d> out;
  for (const auto& v : local) {
    if ((r * v).z() <= zmin + tol) out.push_back(v);
  }
  return out;
}

struct FramePose {
  Matrix3d rotation;  // gripper -> world
  Vector3d position;  // grasp point in world
};

// Everything fixed over an episode.
struct EpisodePlan {
  std::vector<LocalBox> boxes;
  std::vector<Vector3d> vertices;
  std::optional<LocalBox> second_box;  // world-frame, yaw applied via second_pose
  Eigen::Isometry3d second_pose = Eigen::Isometry3d::Identity();
  std::vector<Point3> annotation_world;
  Point3 load_point = Point3::Zero();  // where the environment pushes on the grasped object
  std::vector<FramePose> poses;
};

Matrix3d yaw(double a) { return AngleAxisd(a, Vector3d::UnitZ()).toRotationMatrix(); }

bool above(const std::vector<Vector3d>& local, const FramePose& pose, double floor) {
  return lowest_z(local, pose.rotation, pose.position) >= floor - 1e-9;
}

// Rotations about a fixed world point: contact episodes vary pose "around the
// contact point" with bounded increments.
void plan_pivot_frames(EpisodePlan& plan, const Matrix3d& base, const Vector3d& pivot_local, const Point3& pivot_world,
                       int frames, double max_angle, std::mt19937_64& rng) {
  const FramePose base_pose{base, pivot_world - base * pivot_local};
  for (int f = 0; f < frames; ++f) {
    const Matrix3d r = AngleAxisd(uniform(rng, 0.0, max_angle), random_unit(rng)).toRotationMatrix() * base;
    FramePose pose{r, pivot_world - r * pivot_local};
    const bool pivot_lowest = lowest_vertex(plan.vertices, r) == lowest_vertex(plan.vertices, base) &&
                              above(plan.vertices, pose, pivot_world.z());
    plan.poses.push_back(pivot_lowest ? pose : base_pose);
  }
}

EpisodePlan plan_episode(const SceneConfig& cfg, std::mt19937_64& rng) {
  EpisodePlan plan;
  Vector3d dims = cfg.dims;
  for (int i = 0; i < 3; ++i) dims[i] *= 1.0 + uniform(rng, -cfg.dim_jitter, cfg.dim_jitter);
  plan.boxes = object_boxes(cfg.object, dims);
  plan.vertices = box_vertices(plan.boxes);

  const double range = cfg.placement_range;
  const Point3 spot(uniform(rng, -range, range), uniform(rng, -range, range), 0.0);
  const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  // Two-axis tilt leaves a single lowest vertex.
  auto point_tilt = [&] {
    return Matrix3d(yaw(heading) * AngleAxisd(random_sign(rng) * uniform(rng, 8.0, 20.0) * kDeg, Vector3d::UnitY()) *
                    AngleAxisd(random_sign(rng) * uniform(rng, 20.0, 40.0) * kDeg, Vector3d::UnitX()));
  };

  switch (cfg.mode) {
    case ContactMode::Point: {
      const Matrix3d base = point_tilt();
      const Vector3d tip = plan.vertices[lowest_vertex(plan.vertices, base)];
      plan.annotation_world = {spot};
      plan.load_point = spot;
      plan_pivot_frames(plan, base, tip, spot, cfg.frames, 4.0 * kDeg, rng);
      break;
    }
    case ContactMode::Line: {
      const Matrix3d base =
          yaw(heading) * AngleAxisd(random_sign(rng) * uniform(rng, 20.0, 40.0) * kDeg, Vector3d::UnitX());
      const auto low = lowest_vertices(plan.vertices, base, 1e-9);
      double xmin = low.front().x(), xmax = xmin;
      for (const auto& v : low) {
        xmin = std::min(xmin, v.x());
        xmax = std::max(xmax, v.x());
      }
      const Vector3d a_local(xmin, low.front().y(), low.front().z());
      const Vector3d b_local(xmax, low.front().y(), low.front().z());
      const Vector3d mid_local = 0.5 * (a_local + b_local);
      const Vector3d position = spot - base * mid_local;
      for (int i = 0; i < 5; ++i) {
        const double t = i / 4.0;
        plan.annotation_world.push_back(base * ((1.0 - t) * a_local + t * b_local) + position);
      }
      plan.load_point = spot;
      // Rolling about the contact edge keeps the edge on the table.
      const Vector3d edge_axis = (base * Vector3d::UnitX()).normalized();
      for (int f = 0; f < cfg.frames; ++f) {
        const Matrix3d r = AngleAxisd(uniform(rng, -3.0, 3.0) * kDeg, edge_axis).toRotationMatrix() * base;
        FramePose pose{r, spot - r * mid_local};
        plan.poses.push_back(above(plan.vertices, pose, 0.0) ? pose : FramePose{base, position});
      }
      break;
    }
    case ContactMode::Patch: {
      const Matrix3d base = yaw(heading);
      const auto low = lowest_vertices(plan.vertices, base, 1e-9);
      Vector3d lo = low.front(), hi = low.front();
      for (const auto& v : low) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
      const Vector3d center_local = 0.5 * (lo + hi);
      const Vector3d position = spot - base * center_local;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const Vector3d local(lo.x() + (hi.x() - lo.x()) * i / 2.0, lo.y() + (hi.y() - lo.y()) * j / 2.0, lo.z());
          plan.annotation_world.push_back(base * local + position);
        }
      }
      plan.load_point = spot;
      // Flat contact: only the load varies.
      plan.poses.assign(static_cast<std::size_t>(cfg.frames), FramePose{base, position});
      break;
    }
    case ContactMode::Chained: {
      Vector3d sd = cfg.second_object_dims;
      for (int i = 0; i < 3; ++i) sd[i] *= 1.0 + uniform(rng, -cfg.dim_jitter, cfg.dim_jitter);
      const double box_yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      plan.second_box = LocalBox{{0.0, 0.0, 0.5 * sd.z()}, 0.5 * sd};
      plan.second_pose = Eigen::Isometry3d::Identity();
      plan.second_pose.linear() = yaw(box_yaw);
      plan.second_pose.translation() = spot;
      const Point3 contact =
          plan.second_pose * Vector3d(uniform(rng, -0.3, 0.3) * sd.x(), uniform(rng, -0.3, 0.3) * sd.y(), sd.z());
      plan.annotation_world = {contact};
      // Box-table interface: bottom perimeter corners and edge midpoints.
      for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
          if (i == 0 && j == 0) continue;
          plan.annotation_world.push_back(plan.second_pose * Vector3d(0.5 * i * sd.x(), 0.5 * j * sd.y(), 0.0));
        }
      }
      plan.load_point = contact;
      const Matrix3d base = point_tilt();
      const Vector3d tip = plan.vertices[lowest_vertex(plan.vertices, base)];
      plan_pivot_frames(plan, base, tip, contact, cfg.frames, 4.0 * kDeg, rng);
      break;
    }
    case ContactMode::None: {
      const Matrix3d base = yaw(heading) * AngleAxisd(uniform(rng, 0.0, 40.0) * kDeg, Vector3d::UnitX());
      for (int f = 0; f < cfg.frames; ++f) {
        const Matrix3d r = AngleAxisd(uniform(rng, 0.0, 6.0 * kDeg), random_unit(rng)).toRotationMatrix() * base;
        const double gap = uniform(rng, cfg.hover_min, cfg.hover_max);
        Vector3d position = spot + Vector3d(uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01), 0.0);
        position.z() = 0.0;
        position.z() = gap - lowest_z(plan.vertices, r, position);
        plan.poses.push_back({r, position});
      }
      break;
    }
  }

  const double floor = 0.0;
  for (const auto& pose : plan.poses) {
    if (!above(plan.vertices, pose, floor)) throw_data_error("degenerate geometry: object below table");
  }
  return plan;
}

SceneState scene_at(const SceneConfig& cfg, const EpisodePlan& plan, const FramePose& pose) {
  SceneState scene;
  const double e = cfg.table_half_extent;
  scene.faces.push_back({Point3(-e, -e, 0.0), Vector3d(2.0 * e, 0.0, 0.0), Vector3d(0.0, 2.0 * e, 0.0)});
  Eigen::Isometry3d obj = Eigen::Isometry3d::Identity();
  obj.linear() = pose.rotation;
  obj.translation() = pose.position;
  for (const auto& b : plan.boxes) {
    for (const auto& q : box_faces(b.center, b.half, obj)) scene.faces.push_back(q);
  }
  if (plan.second_box) {
    for (const auto& q : box_faces(plan.second_box->center, plan.second_box->half, plan.second_pose)) {
      scene.faces.push_back(q);
    }
  }
  return scene;
}

Quaternion to_quaternion(const Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

nlohmann::json vec_json(const Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vector3d json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

std::string to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Stick: return "stick";
    case ObjectKind::Box: return "box";
    case ObjectKind::LShape: return "l_shape";
  }
  return "stick";
}

std::string to_string(ContactMode mode) {
  switch (mode) {
    case ContactMode::None: return "none";
    case ContactMode::Point: return "point";
    case ContactMode::Line: return "line";
    case ContactMode::Patch: return "patch";
    case ContactMode::Chained: return "chained";
  }
  return "none";
}

ObjectKind object_kind_from_string(const std::string& s) {
  if (s == "stick") return ObjectKind::Stick;
  if (s == "box") return ObjectKind::Box;
  if (s == "l_shape") return ObjectKind::LShape;
  throw_data_error("unknown object kind '" + s + "'");
}

ContactMode contact_mode_from_string(const std::string& s) {
  if (s == "none") return ContactMode::None;
  if (s == "point") return ContactMode::Point;
  if (s == "line") return ContactMode::Line;
  if (s == "patch") return ContactMode::Patch;
  if (s == "chained") return ContactMode::Chained;
  throw_data_error("unknown contact mode '" + s + "'");
}

void SceneConfig::validate() const {
  if ((dims.array() <= 0.0).any() || (second_object_dims.array() <= 0.0).any()) {
    throw_data_error("object dimensions must be positive");
  }
  if (dim_jitter < 0.0 || dim_jitter >= 1.0) throw_data_error("dim_jitter must be in [0, 1)");
  if (hover_min < 0.0 || hover_max < hover_min) throw_data_error("degenerate geometry: object below table");
  if (frames < 1) throw_data_error("an episode needs at least one frame");
  if (points < 1) throw_data_error("point count must be at least 1");
  if (tactile_h < 2 || tactile_w < 2) throw_data_error("tactile grid must be at least 2x2");
  if (table_half_extent <= placement_range) throw_data_error("placement range exceeds the table");
  if (camera.radius_min <= 0.0 || camera.radius_max < camera.radius_min) throw_data_error("bad camera radius range");
  if (camera.polar_min_deg < 0.0 || camera.polar_max_deg >= 90.0 || camera.polar_max_deg < camera.polar_min_deg) {
    throw_data_error("camera must look down at the table");
  }
  if (force.normal_min <= 0.0 || force.normal_max < force.normal_min) throw_data_error("bad normal force range");
  if (noise.point < 0.0 || noise.force < 0.0 || noise.torque < 0.0 || noise.tactile < 0.0) {
    throw_data_error("noise levels must be non-negative");
  }
}

nlohmann::json SceneConfig::to_json() const {
  return {
      {"object", to_string(object)},
      {"dims", vec_json(dims)},
      {"dim_jitter", dim_jitter},
      {"mode", to_string(mode)},
      {"second_object_dims", vec_json(second_object_dims)},
      {"table_half_extent", table_half_extent},
      {"placement_range", placement_range},
      {"hover", {hover_min, hover_max}},
      {"camera",
       {{"radius", {camera.radius_min, camera.radius_max}},
        {"polar_deg", {camera.polar_min_deg, camera.polar_max_deg}},
        {"target_jitter", camera.target_jitter}}},
      {"noise", {{"point", noise.point}, {"force", noise.force}, {"torque", noise.torque}, {"tactile", noise.tactile}}},
      {"force", {{"normal", {force.normal_min, force.normal_max}}, {"friction", force.friction}}},
      {"tactile_model",
       {{"shear_gain", tactile.shear_gain},
        {"twist_gain", tactile.twist_gain},
        {"envelope_sigma", tactile.envelope_sigma}}},
      {"frames", frames},
      {"points", points},
      {"tactile", {tactile_h, tactile_w}},
      {"rate_hz", rate_hz},
      {"unseen", unseen},
  };
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
  SceneConfig c;
  try {
    if (j.contains("object")) c.object = object_kind_from_string(j.at("object").get<std::string>());
    if (j.contains("dims")) c.dims = json_vec(j.at("dims"));
    c.dim_jitter = j.value("dim_jitter", c.dim_jitter);
    if (j.contains("mode")) c.mode = contact_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("second_object_dims")) c.second_object_dims = json_vec(j.at("second_object_dims"));
    c.table_half_extent = j.value("table_half_extent", c.table_half_extent);
    c.placement_range = j.value("placement_range", c.placement_range);
    if (j.contains("hover")) {
      c.hover_min = j.at("hover").at(0).get<double>();
      c.hover_max = j.at("hover").at(1).get<double>();
    }
    if (j.contains("camera")) {
      const auto& cj = j.at("camera");
      if (cj.contains("radius")) {
        c.camera.radius_min = cj.at("radius").at(0).get<double>();
        c.camera.radius_max = cj.at("radius").at(1).get<double>();
      }
      if (cj.contains("polar_deg")) {
        c.camera.polar_min_deg = cj.at("polar_deg").at(0).get<double>();
        c.camera.polar_max_deg = cj.at("polar_deg").at(1).get<double>();
      }
      c.camera.target_jitter = cj.value("target_jitter", c.camera.target_jitter);
    }
    if (j.contains("noise")) {
      const auto& nj = j.at("noise");
      c.noise.point = nj.value("point", c.noise.point);
      c.noise.force = nj.value("force", c.noise.force);
      c.noise.torque = nj.value("torque", c.noise.torque);
      c.noise.tactile = nj.value("tactile", c.noise.tactile);
    }
    if (j.contains("force")) {
      const auto& fj = j.at("force");
      if (fj.contains("normal")) {
        c.force.normal_min = fj.at("normal").at(0).get<double>();
        c.force.normal_max = fj.at("normal").at(1).get<double>();
      }
      c.force.friction = fj.value("friction", c.force.friction);
    }
    if (j.contains("tactile_model")) {
      const auto& tj = j.at("tactile_model");
      c.tactile.shear_gain = tj.value("shear_gain", c.tactile.shear_gain);
      c.tactile.twist_gain = tj.value("twist_gain", c.tactile.twist_gain);
      c.tactile.envelope_sigma = tj.value("envelope_sigma", c.tactile.envelope_sigma);
    }
    c.frames = j.value("frames", c.frames);
    c.points = j.value("points", c.points);
    if (j.contains("tactile")) {
      c.tactile_h = j.at("tactile").at(0).get<int>();
      c.tactile_w = j.at("tactile").at(1).get<int>();
    }
    c.rate_hz = j.value("rate_hz", c.rate_hz);
    c.unseen = j.value("unseen", c.unseen);
  } catch (const nlohmann::json::exception& e) {
    throw_data_error(std::string("bad scene config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t SceneConfig::digest() const { return fnv1a(to_json().dump()); }

void FrameSample::validate() const {
  if (cloud.empty()) throw_data_error("frame has an empty cloud");
  if (!cloud.all_finite()) throw_data_error("non-finite point in cloud");
  const double qn = std::sqrt(rotation[0] * rotation[0] + rotation[1] * rotation[1] + rotation[2] * rotation[2] +
                              rotation[3] * rotation[3]);
  if (!std::isfinite(qn) || std::abs(qn - 1.0) > 1e-6) throw_data_error("rotation quaternion is not unit length");
  for (double v : wrench) {
    if (!std::isfinite(v)) throw_data_error("non-finite wrench");
  }
  for (const auto* t : {&tactile_left, &tactile_right}) {
    if (t->data.size() != static_cast<std::size_t>(t->h * t->w * 2)) throw_data_error("tactile shape mismatch");
    for (double v : t->data) {
      if (!std::isfinite(v)) throw_data_error("non-finite tactile value");
    }
  }
  if (tactile_left.h != tactile_right.h || tactile_left.w != tactile_right.w) {
    throw_data_error("left and right tactile maps differ in shape");
  }
  if (annotation.is_contact() != contact) throw_data_error("annotation must be nonempty iff the frame is in contact");
  if (!annotation.points.all_finite()) throw_data_error("non-finite annotation coordinates");
}

std::vector<Quad> box_faces(const Eigen::Vector3d& center, const Eigen::Vector3d& half, const Eigen::Isometry3d& pose) {
  std::vector<Quad> faces;
  faces.reserve(6);
  for (int axis = 0; axis < 3; ++axis) {
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    const Vector3d ea = Vector3d::Unit(axis), eb = Vector3d::Unit(b), ec = Vector3d::Unit(c);
    for (double s : {1.0, -1.0}) {
      const Vector3d face_center = center + s * half[axis] * ea;
      // u x v must point along s * ea.
      Vector3d u = 2.0 * half[b] * eb, v = 2.0 * half[c] * ec;
      if (s < 0.0) std::swap(u, v);
      const Vector3d origin = face_center - 0.5 * (u + v);
      faces.push_back({pose * origin, pose.linear() * u, pose.linear() * v});
    }
  }
  return faces;
}

CameraPose look_at(const Point3& eye, const Point3& target) {
  const Vector3d z = (target - eye).normalized();
  Vector3d x = z.cross(Vector3d::UnitZ());
  if (x.norm() < 1e-9) x = Vector3d::UnitX();
  x.normalize();
  const Vector3d y = z.cross(x);
  CameraPose pose;
  pose.world_from_camera.linear().col(0) = x;
  pose.world_from_camera.linear().col(1) = y;
  pose.world_from_camera.linear().col(2) = z;
  pose.world_from_camera.translation() = eye;
  return pose;
}

CameraPose sample_camera(const CameraConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double r = uniform(rng, cfg.radius_min, cfg.radius_max);
  // Uniform over the cap area: cos(polar) is uniform.
  const double cmax = std::cos(cfg.polar_min_deg * kDeg), cmin = std::cos(cfg.polar_max_deg * kDeg);
  const double polar = std::acos(uniform(rng, cmin, cmax));
  const double azimuth = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const Point3 target(uniform(rng, -cfg.target_jitter, cfg.target_jitter),
                      uniform(rng, -cfg.target_jitter, cfg.target_jitter), 0.03);
  const Point3 eye = target + r * Vector3d(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
                                           std::cos(polar));
  return look_at(eye, target);
}

PointCloud render_pointcloud(const SceneState& scene, const CameraPose& camera, std::size_t count, double jitter,
                             std::uint64_t seed) {
  if (count < 1) throw_usage_error("render count must be at least 1");
  const Point3 eye = camera.world_from_camera.translation();
  std::vector<const Quad*> visible;
  std::vector<double> areas;
  for (const auto& q : scene.faces) {
    if (q.normal().dot(eye - q.center()) > 0.0 && q.area() > 0.0) {
      visible.push_back(&q);
      areas.push_back(q.area());
    }
  }
  if (visible.empty()) throw_data_error("no visible surface");

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const Eigen::Isometry3d camera_from_world = camera.world_from_camera.inverse();

  PointCloud out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Quad& q = *visible[pick_face(rng)];
    const double s = unit(rng), t = unit(rng);
    Point3 p = camera_from_world * Point3(q.origin + s * q.u + t * q.v);
    if (jitter > 0.0) p += jitter * Vector3d(noise(rng), noise(rng), noise(rng));
    out.push_back(p);
  }
  return out;
}

Wrench wrench_from_force(const ContactGeometry& g, const Eigen::Vector3d& force_world) {
  const Matrix3d world_to_sensor = g.sensor_rotation.transpose();
  const Vector3d f = world_to_sensor * force_world;
  const Vector3d tau = world_to_sensor * (g.point - g.wrist).cross(force_world);
  return {f.x(), f.y(), f.z(), tau.x(), tau.y(), tau.z()};
}

WrenchSample synth_wrench(bool contact, const ContactGeometry& g, const ForceModel& force, const NoiseConfig& noise,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WrenchSample out;
  if (contact) {
    const double fn = uniform(rng, force.normal_min, force.normal_max);
    const Vector3d n = g.normal.normalized();
    // Tangent basis for the friction component.
    Vector3d t1 = n.cross(std::abs(n.x()) < 0.9 ? Vector3d::UnitX() : Vector3d::UnitY()).normalized();
    const Vector3d t2 = n.cross(t1);
    const double ft = fn * uniform(rng, 0.0, force.friction);
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Vector3d f = fn * n + ft * (std::cos(a) * t1 + std::sin(a) * t2);
    out.noiseless = wrench_from_force(g, f);
    out.normal_force = fn;
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 6; ++i) {
    const double sigma = i < 3 ? noise.force : noise.torque;
    out.measured[static_cast<std::size_t>(i)] = out.noiseless[static_cast<std::size_t>(i)] + sigma * unit(rng);
  }
  return out;
}

TactilePair synth_tactile(bool contact, const Wrench& w, const TactileModel& model, int h, int wd, double noise,
                          std::uint64_t seed) {
  if (h < 2 || wd < 2) throw_usage_error("tactile grid must be at least 2x2");
  TactilePair out{TactileMap(h, wd), TactileMap(h, wd)};
  if (contact) {
    // Gel plane spans sensor x (u) and z (v); twist is torque about y.
    const double fu = w[0], fv = w[2], twist = w[4];
    const double s2 = 2.0 * model.envelope_sigma * model.envelope_sigma;
    for (int i = 0; i < h; ++i) {
      const double v = (2.0 * i - (h - 1)) / (h - 1);
      for (int j = 0; j < wd; ++j) {
        const double u = (2.0 * j - (wd - 1)) / (wd - 1);
        const double env = std::exp(-(u * u + v * v) / s2);
        const double shear_u = 0.5 * model.shear_gain * env * fu;
        const double shear_v = 0.5 * model.shear_gain * env * fv;
        const double rot_u = -model.twist_gain * twist * v;
        const double rot_v = model.twist_gain * twist * u;
        out.left.at(i, j, 0) = shear_u + rot_u;
        out.left.at(i, j, 1) = shear_v + rot_v;
        out.right.at(i, j, 0) = shear_u - rot_u;
        out.right.at(i, j, 1) = shear_v - rot_v;
      }
    }
  }
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise);
    for (auto* m : {&out.left, &out.right}) {
      for (double& x : m->data) x += n(rng);
    }
  }
  return out;
}

void quantize_to_float(FrameSample& frame) {
  for (auto& p : frame.cloud) p = p.cast<float>().cast<double>();
  Eigen::Vector4d q(frame.rotation[0], frame.rotation[1], frame.rotation[2], frame.rotation[3]);
  q.normalize();
  for (int i = 0; i < 4; ++i) frame.rotation[static_cast<std::size_t>(i)] = to_float(q[i]);
  for (double& v : frame.wrench) v = to_float(v);
  for (auto* t : {&frame.tactile_left, &frame.tactile_right}) {
    for (double& v : t->data) v = to_float(v);
  }
}

Episode generate_episode(const SceneConfig& cfg, std::uint64_t seed, EpisodeTrace* trace) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, {0}));
  const EpisodePlan plan = plan_episode(cfg, rng);
  const CameraPose camera = sample_camera(cfg.camera, derive_seed(seed, {1}));
  const Eigen::Isometry3d camera_from_world = camera.world_from_camera.inverse();

  Episode ep;
  char id[32];
  std::snprintf(id, sizeof(id), "ep-%016llx", static_cast<unsigned long long>(seed));
  ep.id = id;
  ep.mode = cfg.mode;
  ep.object = cfg.object;
  ep.unseen = cfg.unseen;
  ep.rate_hz = cfg.rate_hz;
  ep.config_digest = cfg.digest();
  for (const auto& p : plan.annotation_world) ep.annotation.points.push_back(camera_from_world * p);
  if (trace) {
    trace->camera = camera;
    trace->frames.clear();
  }

  const bool contact = cfg.mode != ContactMode::None;
  const auto count = static_cast<std::size_t>(cfg.points);
  const auto raw = static_cast<std::size_t>(std::ceil(1.25 * cfg.points));
  // Generous fixed crop in the camera frame, applied identically everywhere.
  const CropBox crop_box{Point3(-1.0, -1.0, 0.05), Point3(1.0, 1.0, 2.0)};

  for (int f = 0; f < cfg.frames; ++f) {
    const auto fu = static_cast<std::uint64_t>(f);
    const FramePose& pose = plan.poses[static_cast<std::size_t>(f)];
    FrameSample frame;
    const PointCloud rendered = render_pointcloud(scene_at(cfg, plan, pose), camera, raw, cfg.noise.point,
                                                  derive_seed(seed, {2, fu}));
    frame.cloud = downsample(crop(rendered, crop_box), count, derive_seed(seed, {3, fu}));
    frame.rotation = to_quaternion(pose.rotation);

    ContactGeometry geometry{plan.load_point, Vector3d::UnitZ(), pose.position, pose.rotation};
    const WrenchSample ws = synth_wrench(contact, geometry, cfg.force, cfg.noise, derive_seed(seed, {4, fu}));
    frame.wrench = ws.measured;
    auto tactile = synth_tactile(contact, ws.noiseless, cfg.tactile, cfg.tactile_h, cfg.tactile_w, cfg.noise.tactile,
                                 derive_seed(seed, {5, fu}));
    frame.tactile_left = std::move(tactile.left);
    frame.tactile_right = std::move(tactile.right);
    frame.annotation = ep.annotation;
    frame.contact = contact;
    quantize_to_float(frame);
    ep.frames.push_back(std::move(frame));
    if (trace) trace->frames.push_back({ws.normal_force, ws.noiseless, pose.position});
  }
  return ep;
}

nlohmann::json DatasetRecipe::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) entries_json.push_back({{"scene", e.scene.to_json()}, {"weight", e.weight}});
  return {{"episodes", episodes}, {"entries", entries_json}};
}

DatasetRecipe DatasetRecipe::from_json(const nlohmann::json& j) {
  DatasetRecipe r;
  try {
    r.episodes = j.value("episodes", r.episodes);
    for (const auto& e : j.at("entries")) {
      r.entries.push_back({SceneConfig::from_json(e.at("scene")), e.value("weight", 1.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw_data_error(std::string("bad dataset recipe: ") + e.what());
  }
  if (r.entries.empty()) throw_data_error("dataset recipe has no entries");
  return r;
}

DatasetRecipe default_recipe(int episodes, int frames, int points) {
  DatasetRecipe r;
  r.episodes = episodes;
  auto add = [&](ObjectKind obj, Eigen::Vector3d dims, ContactMode mode, double weight) {
    SceneConfig c;
    c.object = obj;
    c.dims = dims;
    c.mode = mode;
    c.frames = frames;
    c.points = points;
    r.entries.push_back({c, weight});
  };
  const Eigen::Vector3d stick(0.015, 0.015, 0.14), box(0.05, 0.04, 0.08), ell(0.015, 0.06, 0.12);
  for (const auto& [obj, dims] : {std::pair{ObjectKind::Stick, stick}, std::pair{ObjectKind::Box, box},
                                  std::pair{ObjectKind::LShape, ell}}) {
    add(obj, dims, ContactMode::Point, 2.0);
    add(obj, dims, ContactMode::Line, 1.0);
    add(obj, dims, ContactMode::Patch, 1.0);
    add(obj, dims, ContactMode::Chained, 1.0);
    add(obj, dims, ContactMode::None, 2.5);
  }
  return r;
}

std::vector<Episode> generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed) {
  if (recipe.entries.empty()) throw_data_error("dataset recipe has no entries");
  std::vector<double> weights;
  for (const auto& e : recipe.entries) weights.push_back(e.weight);
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(recipe.episodes));
  for (int i = 0; i < recipe.episodes; ++i) {
    const auto iu = static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(derive_seed(seed, {100, iu}));
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const auto& entry = recipe.entries[pick(rng)];
    Episode ep = generate_episode(entry.scene, derive_seed(seed, {101, iu}));
    char id[16];
    std::snprintf(id, sizeof(id), "ep%05d", i);
    ep.id = id;
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace unic
