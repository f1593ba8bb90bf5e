#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "test_util.hpp"
#include "unic/geometry.hpp"

using namespace unic;
using unic::test::random_cloud;

namespace {

double brute_min(const Point3& p, const PointCloud& s) {
  double best = INFINITY;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dx = p.x() - s[i].x(), dy = p.y() - s[i].y(), dz = p.z() - s[i].z();
    best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return best;
}

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  double sa = 0, sb = 0;
  for (const auto& p : a) sa += brute_min(p, b);
  for (const auto& q : b) sb += brute_min(q, a);
  return 0.5 * (sa / a.size() + sb / b.size());
}

}  // namespace

TEST(MinDistance, MemberIsZero) {
  PointCloud s{{0.1, 0.2, 0.3}, {1, 2, 3}};
  EXPECT_EQ(min_distance_to_set(s[1], s), 0.0);
}

TEST(MinDistance, DirectEuclidean) {
  PointCloud s{{0, 0, 0.003}, {0, 0.005, 0}};
  EXPECT_DOUBLE_EQ(min_distance_to_set(Point3::Zero(), s), 0.003);
}

TEST(MinDistance, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_cloud(rng, 50);
    const Point3 p = random_cloud(rng, 1)[0];
    EXPECT_EQ(min_distance_to_set(p, s), brute_min(p, s));
  }
}

TEST(MinDistance, EmptySetIsAnError) {
  EXPECT_EQ(test::error_message_of([] { min_distance_to_set(Point3::Zero(), PointCloud{}); }), "empty annotation set");
}

TEST(MinDistance, InvariantUnderSetPermutation) {
  std::mt19937_64 rng(5);
  auto s = random_cloud(rng, 40);
  const Point3 p = random_cloud(rng, 1)[0];
  const double before = min_distance_to_set(p, s);
  std::vector<Point3> pts(s.begin(), s.end());
  std::shuffle(pts.begin(), pts.end(), rng);
  EXPECT_EQ(min_distance_to_set(p, PointCloud(pts)), before);
}

TEST(Chamfer, IdenticalSetsAreZero) {
  std::mt19937_64 rng(1);
  const auto a = random_cloud(rng, 30);
  EXPECT_EQ(chamfer_distance(a, a), 0.0);
}

TEST(Chamfer, SinglePointPair) {
  EXPECT_NEAR(chamfer_distance(PointCloud{{0, 0, 0}}, PointCloud{{0, 0, 0.01}}), 0.01, 1e-15);
}

TEST(Chamfer, FrozenAsymmetricSizes) {
  // 0.5 * ((1 + sqrt 2) / 2 + 1), from an independent numpy evaluation.
  EXPECT_NEAR(chamfer_distance(PointCloud{{0, 0, 0}, {1, 0, 0}}, PointCloud{{0, 1, 0}}), 1.1035533905932737, 1e-15);
}

TEST(Chamfer, MatchesBruteForce17x23) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_cloud(rng, 17), b = random_cloud(rng, 23);
    const double ref = brute_chamfer(a, b);
    EXPECT_NEAR(chamfer_distance(a, b), ref, 1e-12 * ref);
  }
}

TEST(Chamfer, SymmetricExactly) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_cloud(rng, 1 + trial % 9), b = random_cloud(rng, 2 + trial % 13);
    EXPECT_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
  }
}

TEST(Chamfer, RigidTransformInvariance) {
  std::mt19937_64 rng(8);
  const auto a = random_cloud(rng, 25), b = random_cloud(rng, 31);
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.rotate(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
  pose.pretranslate(Eigen::Vector3d(0.3, -1.2, 2.0));
  const double before = chamfer_distance(a, b);
  EXPECT_NEAR(chamfer_distance(transform(a, pose), transform(b, pose)), before, 1e-9 * before);
}

TEST(Chamfer, EmptySideIsAnError) {
  EXPECT_EQ(test::error_kind_of([] { chamfer_distance(PointCloud{}, PointCloud{{0, 0, 0}}); }), ErrorKind::Data);
  EXPECT_EQ(test::error_kind_of([] { chamfer_distance(PointCloud{{0, 0, 0}}, PointCloud{}); }), ErrorKind::Data);
}

TEST(Crop, ContainingBoxIsIdentity) {
  std::mt19937_64 rng(2);
  const auto c = random_cloud(rng, 40);
  EXPECT_EQ(crop(c, {Point3::Constant(-1), Point3::Constant(1)}), c);
}

TEST(Crop, EmptyResultIsAnError) {
  const PointCloud c{{2, 2, 2}, {-2, -2, -2}};
  EXPECT_EQ(test::error_message_of([&] { crop(c, {Point3::Constant(-0.5), Point3::Constant(0.5)}); }),
            "crop produced empty cloud");
}

TEST(Crop, MembershipMatchesPredicate) {
  std::mt19937_64 rng(4);
  const auto c = random_cloud(rng, 200, 1.0);
  const CropBox box{{-0.5, -0.2, 0.0}, {0.4, 0.9, 0.7}};
  PointCloud expected;
  for (const auto& p : c) {
    bool in = true;
    for (int i = 0; i < 3; ++i) in = in && p[i] >= box.min_corner[i] && p[i] <= box.max_corner[i];
    if (in) expected.push_back(p);
  }
  EXPECT_EQ(crop(c, box), expected);
}

TEST(Crop, ClosedBoundary) {
  const PointCloud c{{1, 0, 0}, {1.0000001, 0, 0}};
  EXPECT_EQ(crop(c, {Point3(0, 0, 0), Point3(1, 0, 0)}).size(), 1u);
}

TEST(Downsample, EqualSizeIsPermutation) {
  std::mt19937_64 rng(6);
  const auto c = random_cloud(rng, 64);
  const auto d = downsample(c, 64, 99);
  ASSERT_EQ(d.size(), 64u);
  auto key = [](const Point3& p) { return std::make_tuple(p.x(), p.y(), p.z()); };
  std::multiset<std::tuple<double, double, double>> a, b;
  for (const auto& p : c) a.insert(key(p));
  for (const auto& p : d) b.insert(key(p));
  EXPECT_EQ(a, b);
}

TEST(Downsample, DeterministicAndSubset) {
  std::mt19937_64 rng(7);
  const auto c = random_cloud(rng, 2000);
  const auto d1 = downsample(c, 1024, 5), d2 = downsample(c, 1024, 5);
  EXPECT_EQ(d1, d2);
  ASSERT_EQ(d1.size(), 1024u);
  const auto idx = downsample_indices(2000, 1024, 5);
  std::set<std::size_t> unique(idx.begin(), idx.end());
  EXPECT_EQ(unique.size(), 1024u);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(d1[i], c[idx[i]]);
  EXPECT_NE(downsample(c, 1024, 6), d1);
}

TEST(Downsample, UpsamplesWithReplacement) {
  std::mt19937_64 rng(9);
  const auto c = random_cloud(rng, 100);
  const auto d = downsample(c, 1024, 1);
  ASSERT_EQ(d.size(), 1024u);
  for (const auto& p : d) EXPECT_NE(std::find(c.begin(), c.end(), p), c.end());
}

TEST(Centroid, Basics) {
  EXPECT_EQ(centroid(PointCloud{{1, 2, 3}}), Point3(1, 2, 3));
  EXPECT_EQ(centroid(PointCloud{{0, 0, 0}, {0, 0, 2}}), Point3(0, 0, 1));
  EXPECT_EQ(test::error_kind_of([] { centroid(PointCloud{}); }), ErrorKind::Data);
}

TEST(Centroid, MatchesNaiveSum) {
  std::mt19937_64 rng(10);
  const auto c = random_cloud(rng, 10);
  Point3 s = Point3::Zero();
  for (const auto& p : c) s += p;
  EXPECT_NEAR((centroid(c) - s / 10.0).norm(), 0.0, 1e-12);
}

TEST(BoundingDiagonal, Box) {
  EXPECT_NEAR(bounding_diagonal(PointCloud{{0, 0, 0}, {0.3, 0, 0}, {0, 0.4, 0}}), 0.5, 1e-15);
}
