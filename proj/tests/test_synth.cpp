#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "unic/labelgen.hpp"
#include "unic/random.hpp"
#include "unic/synth.hpp"

using namespace unic;

namespace {

SceneConfig small_scene(ContactMode mode, ObjectKind obj = ObjectKind::Stick) {
  SceneConfig c;
  c.mode = mode;
  c.object = obj;
  c.points = 256;
  c.frames = 4;
  return c;
}

double distance_to_quad(const Quad& q, const Point3& p) {
  // Closest point on the parallelogram; faces here are rectangles.
  const Eigen::Vector3d d = p - q.origin;
  const double s = std::clamp(d.dot(q.u) / q.u.squaredNorm(), 0.0, 1.0);
  const double t = std::clamp(d.dot(q.v) / q.v.squaredNorm(), 0.0, 1.0);
  return (p - (q.origin + s * q.u + t * q.v)).norm();
}

}  // namespace

TEST(Synth, NoContactEpisode) {
  const auto ep = generate_episode(small_scene(ContactMode::None), 3);
  EXPECT_FALSE(ep.contact());
  for (const auto& f : ep.frames) {
    EXPECT_FALSE(f.contact);
    EXPECT_TRUE(f.annotation.points.empty());
  }
}

TEST(Synth, EpisodeIsDeterministic) {
  for (auto mode : {ContactMode::None, ContactMode::Point, ContactMode::Line, ContactMode::Patch, ContactMode::Chained}) {
    const auto cfg = small_scene(mode, ObjectKind::LShape);
    const auto a = generate_episode(cfg, 77), b = generate_episode(cfg, 77);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    EXPECT_EQ(a.annotation.points, b.annotation.points);
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
      EXPECT_EQ(a.frames[i].cloud, b.frames[i].cloud);
      EXPECT_EQ(a.frames[i].rotation, b.frames[i].rotation);
      EXPECT_EQ(a.frames[i].wrench, b.frames[i].wrench);
      EXPECT_EQ(a.frames[i].tactile_left, b.frames[i].tactile_left);
      EXPECT_EQ(a.frames[i].tactile_right, b.frames[i].tactile_right);
    }
    EXPECT_NE(generate_episode(cfg, 78).frames[0].cloud, a.frames[0].cloud);
  }
}

TEST(Synth, PointModeAnnotationFixedAndPushing) {
  auto cfg = small_scene(ContactMode::Point);
  cfg.frames = 30;
  EpisodeTrace trace;
  const auto ep = generate_episode(cfg, 12, &trace);
  ASSERT_EQ(ep.frames.size(), 30u);
  ASSERT_EQ(trace.frames.size(), 30u);
  for (std::size_t i = 0; i < ep.frames.size(); ++i) {
    EXPECT_EQ(ep.frames[i].annotation.points, ep.frames[0].annotation.points);
    EXPECT_GT(trace.frames[i].normal_force, 0.0);
  }
  // Pose and load vary over the episode.
  EXPECT_NE(ep.frames[0].rotation, ep.frames[29].rotation);
  EXPECT_NE(ep.frames[0].wrench, ep.frames[29].wrench);
}

TEST(Synth, FramesSatisfyInvariants) {
  for (auto obj : {ObjectKind::Stick, ObjectKind::Box, ObjectKind::LShape}) {
    for (auto mode : {ContactMode::None, ContactMode::Point, ContactMode::Line, ContactMode::Patch, ContactMode::Chained}) {
      const auto ep = generate_episode(small_scene(mode, obj), 5);
      for (const auto& f : ep.frames) {
        EXPECT_NO_THROW(f.validate());
        EXPECT_EQ(f.cloud.size(), 256u);
      }
    }
  }
}

TEST(Synth, StoredValuesAreFloatExact) {
  // Episode files hold float32, so generated frames must already be float-rounded.
  auto exact = [](double v) { return v == static_cast<double>(static_cast<float>(v)); };
  for (int points : {16, 123, 139, 256}) {
    auto c = small_scene(ContactMode::Line);
    c.points = points;
    const auto ep = generate_episode(c, static_cast<std::uint64_t>(points));
    for (const auto& f : ep.frames) {
      for (const auto& p : f.cloud) EXPECT_TRUE(exact(p.x()) && exact(p.y()) && exact(p.z())) << points;
      for (double v : f.rotation) EXPECT_TRUE(exact(v));
      for (double v : f.wrench) EXPECT_TRUE(exact(v));
      for (double v : f.tactile_left.data) EXPECT_TRUE(exact(v));
    }
  }
}

TEST(SynthProperty, LabelConsistency) {
  // Patch from the ground-truth labels is nonempty iff the frame is in contact.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto mode = static_cast<ContactMode>(seed % 5);
    const auto ep = generate_episode(small_scene(mode, static_cast<ObjectKind>(seed % 3)), seed);
    for (const auto& f : ep.frames) {
      const auto patch = extract_contact_patch(f.cloud, generate_affordance(f.cloud, f.annotation, {}));
      EXPECT_EQ(!patch.empty(), f.contact) << "seed " << seed;
    }
  }
}

TEST(Synth, GeometryErrors) {
  auto cfg = small_scene(ContactMode::None);
  cfg.hover_min = -0.01;
  EXPECT_EQ(test::error_message_of([&] { generate_episode(cfg, 1); }), "degenerate geometry: object below table");
  cfg = small_scene(ContactMode::Point);
  cfg.frames = 0;
  EXPECT_EQ(test::error_kind_of([&] { generate_episode(cfg, 1); }), ErrorKind::Data);
  cfg = small_scene(ContactMode::Point);
  cfg.dims = {0.01, -0.01, 0.1};
  EXPECT_EQ(test::error_kind_of([&] { generate_episode(cfg, 1); }), ErrorKind::Data);
}

TEST(Render, PointsLieOnTheBoxSurface) {
  const Eigen::Isometry3d pose = Eigen::Translation3d(0.1, -0.05, 0.3) * Eigen::AngleAxisd(0.4, Eigen::Vector3d(1, 2, 3).normalized());
  SceneState scene{box_faces(Point3::Zero(), Eigen::Vector3d(0.5, 0.5, 0.5), pose)};
  const auto cam = look_at(Point3(1.5, 1.0, 2.0), Point3(0.1, -0.05, 0.3));
  const auto cloud = render_pointcloud(scene, cam, 500, 0.0, 9);
  ASSERT_EQ(cloud.size(), 500u);
  for (const auto& p : cloud) {
    const Point3 w = cam.world_from_camera * p;
    double best = INFINITY;
    for (const auto& q : scene.faces) best = std::min(best, distance_to_quad(q, w));
    EXPECT_LT(best, 1e-9);
  }
}

TEST(Render, ExactCountAndNoVisibleSurface) {
  SceneState scene{box_faces(Point3::Zero(), Eigen::Vector3d(0.1, 0.1, 0.1), Eigen::Isometry3d::Identity())};
  const auto cam = look_at(Point3(0, 0, 1), Point3::Zero());
  EXPECT_EQ(render_pointcloud(scene, cam, 1024, 0.001, 1).size(), 1024u);
  SceneState back{{scene.faces[1]}};  // the -x face, turned away from a camera on +x
  const auto side = look_at(Point3(1, 0, 0), Point3::Zero());
  EXPECT_EQ(test::error_message_of([&] { render_pointcloud(back, side, 10, 0.0, 1); }), "no visible surface");
}

TEST(Render, ContactPointsFollowTheExtrinsic) {
  // The same world-frame annotation, seen from two cameras, maps back to one point.
  auto cfg = small_scene(ContactMode::Point);
  EpisodeTrace ta, tb;
  const auto a = generate_episode(cfg, 21, &ta);
  cfg.camera.target_jitter = 0.0;
  cfg.camera.polar_min_deg = 5.0;
  const auto b = generate_episode(cfg, 21, &tb);
  EXPECT_NE(a.frames[0].cloud, b.frames[0].cloud);
  ASSERT_EQ(a.annotation.points.size(), b.annotation.points.size());
  for (std::size_t i = 0; i < a.annotation.points.size(); ++i) {
    const Point3 wa = ta.camera.world_from_camera * a.annotation.points[i];
    const Point3 wb = tb.camera.world_from_camera * b.annotation.points[i];
    EXPECT_LT((wa - wb).norm(), 1e-6);  // annotations are stored at float precision
  }
}

TEST(Wrench, NoContactNoNoiseIsZero) {
  NoiseConfig quiet{0, 0, 0, 0};
  const auto w = synth_wrench(false, {}, {}, quiet, 4);
  for (double v : w.measured) EXPECT_EQ(v, 0.0);
}

TEST(Wrench, LeverArmTorque) {
  ContactGeometry g;
  g.point = Point3(0.02, -0.01, 0.0);
  g.wrist = Point3(0.0, 0.0, 0.15);
  g.sensor_rotation = Eigen::AngleAxisd(0.7, Eigen::Vector3d(0.2, 1, 0.5).normalized()).toRotationMatrix();
  const Eigen::Vector3d f(0.5, -1.0, 7.0);
  const auto w = wrench_from_force(g, f);
  const Eigen::Vector3d r = g.point - g.wrist;
  const Eigen::Vector3d tau_world(r.y() * f.z() - r.z() * f.y(), r.z() * f.x() - r.x() * f.z(), r.x() * f.y() - r.y() * f.x());
  const Eigen::Vector3d tau = g.sensor_rotation.transpose() * tau_world;
  const Eigen::Vector3d fs = g.sensor_rotation.transpose() * f;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(w[static_cast<std::size_t>(i)], fs[i], 1e-12);
    EXPECT_NEAR(w[static_cast<std::size_t>(i + 3)], tau[i], 1e-12);
  }
}

TEST(Wrench, ContactNormalForceInRange) {
  ForceModel fm;
  NoiseConfig quiet{0, 0, 0, 0};
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto w = synth_wrench(true, {}, fm, quiet, s);
    EXPECT_GE(w.normal_force, fm.normal_min);
    EXPECT_LE(w.normal_force, fm.normal_max);
    EXPECT_EQ(w.measured, w.noiseless);
  }
}

TEST(Wrench, NoContactNoiseIsZeroMean) {
  NoiseConfig n;
  n.force = 0.1;
  n.torque = 0.1;
  std::array<double, 6> mean{};
  const int samples = 10000;
  for (int s = 0; s < samples; ++s) {
    const auto w = synth_wrench(false, {}, {}, n, derive_seed(5, {static_cast<std::uint64_t>(s)}));
    for (std::size_t i = 0; i < 6; ++i) mean[i] += w.measured[i] / samples;
  }
  for (double m : mean) EXPECT_LT(std::abs(m), 3 * 0.1 / std::sqrt(double(samples)));
}

TEST(Tactile, NoContactNoNoiseIsZero) {
  const auto t = synth_tactile(false, {1, 2, 3, 4, 5, 6}, {}, 8, 8, 0.0, 1);
  for (double v : t.left.data) EXPECT_EQ(v, 0.0);
  for (double v : t.right.data) EXPECT_EQ(v, 0.0);
}

TEST(Tactile, ShearScalesWithTangentialForce) {
  auto mean_magnitude = [](const TactileMap& m) {
    double u = 0, v = 0;
    for (int i = 0; i < m.h; ++i)
      for (int j = 0; j < m.w; ++j) {
        u += m.at(i, j, 0);
        v += m.at(i, j, 1);
      }
    return std::hypot(u, v) / (m.h * m.w);
  };
  const Wrench w{1.5, 4.0, -0.8, 0.0, 0.0, 0.0};
  const Wrench w2{3.0, 4.0, -1.6, 0.0, 0.0, 0.0};
  const auto a = synth_tactile(true, w, {}, 8, 8, 0.0, 1), b = synth_tactile(true, w2, {}, 8, 8, 0.0, 1);
  EXPECT_GT(mean_magnitude(a.left), 0.0);
  EXPECT_NEAR(mean_magnitude(b.left), 2 * mean_magnitude(a.left), 1e-12);
  EXPECT_NEAR(mean_magnitude(b.right), 2 * mean_magnitude(a.right), 1e-12);
}

TEST(Tactile, SeededNoiseIsReproducible) {
  const Wrench w{1, 0, 1, 0, 0.1, 0};
  const auto a = synth_tactile(true, w, {}, 6, 5, 0.05, 44), b = synth_tactile(true, w, {}, 6, 5, 0.05, 44);
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
  EXPECT_EQ(a.left.data.size(), 60u);
  EXPECT_ANY_THROW(synth_tactile(true, w, {}, 1, 5, 0.0, 1));
}

TEST(Recipe, JsonRoundTripAndDataset) {
  const auto r = default_recipe(6, 2, 64);
  const auto back = DatasetRecipe::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  const auto a = generate_dataset(r, 9), b = generate_dataset(back, 9);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].frames[1].cloud, b[i].frames[1].cloud);
}

TEST(SceneConfig, JsonRoundTripAndDigest) {
  auto c = small_scene(ContactMode::Chained, ObjectKind::Box);
  c.noise.tactile = 0.07;
  const auto back = SceneConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.digest(), c.digest());
  c.frames = 5;
  EXPECT_NE(back.digest(), c.digest());
}
