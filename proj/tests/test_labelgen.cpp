#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_util.hpp"
#include "unic/labelgen.hpp"

using namespace unic;
using unic::test::random_cloud;

namespace {

// Straight transcription of the three formulas, one point at a time.
double scalar_label(const Point3& p, const PointCloud& ann, double sigma, double s) {
  double d = INFINITY;
  for (const auto& a : ann) {
    const double dx = p.x() - a.x(), dy = p.y() - a.y(), dz = p.z() - a.z();
    d = std::min(d, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  const double y = std::exp(-d * d / (2 * sigma * sigma));
  double c = s * y;
  if (c < 0) c = 0;
  if (c > 1) c = 1;
  return 2 * c - 1;
}

}  // namespace

TEST(Labelgen, FrozenSmallCase) {
  // Values computed offline in numpy for sigma = 0.01, s = 2.
  const PointCloud cloud{{0, 0, 0}, {0.005, 0, 0}, {0.012, 0, 0}, {0.02, 0, 0}, {0.05, 0, 0}, {0, 0.03, 0.04}};
  const ContactAnnotation ann{{{0, 0, 0}, {0.05, 0.001, 0}}};
  const auto a = generate_affordance(cloud, ann, {0.01, 2.0});
  const std::vector<double> expect{1.0, 1.0, 0.9470090238398867, -0.4586588670535492, 1.0, -0.9999850933873117};
  ASSERT_EQ(a.size(), expect.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], expect[i], 1e-12) << i;
}

TEST(Labelgen, CoincidentPointSaturates) {
  const PointCloud cloud{{0.3, -0.2, 0.5}};
  EXPECT_EQ(generate_affordance(cloud, ContactAnnotation{cloud}, {0.01, 1.0})[0], 1.0);
  EXPECT_EQ(generate_affordance(cloud, ContactAnnotation{cloud}, {0.01, 3.0})[0], 1.0);
}

TEST(Labelgen, FarFieldIsMinusOne) {
  const double sigma = 0.01;
  const auto a = generate_affordance({{10 * sigma, 0, 0}}, ContactAnnotation{{{0, 0, 0}}}, {sigma, 2.0});
  EXPECT_NEAR(a[0], -1.0, 1e-12);
}

TEST(Labelgen, ClampBoundaryRadius) {
  const LabelGenParams p{0.01, 2.0};
  const double r = 0.01 * std::sqrt(2 * std::log(2.0));
  EXPECT_NEAR(r, 0.011774100225154746, 1e-15);
  EXPECT_NEAR(saturation_radius(p), r, 1e-15);
  const auto a = generate_affordance({{r, 0, 0}}, ContactAnnotation{{{0, 0, 0}}}, p);
  EXPECT_NEAR(a[0], 1.0, 1e-12);
  EXPECT_EQ(saturation_radius({0.01, 1.0}), 0.0);
}

TEST(Labelgen, MatchesScalarOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> m(1, 200), n(1, 10);
  std::uniform_real_distribution<double> sig(0.002, 0.05), sc(0.5, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cloud = random_cloud(rng, static_cast<std::size_t>(m(rng)));
    const auto ann = random_cloud(rng, static_cast<std::size_t>(n(rng)));
    const LabelGenParams p{sig(rng), sc(rng)};
    const auto a = generate_affordance(cloud, ContactAnnotation{ann}, p);
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      const double o = scalar_label(cloud[k], ann, p.sigma, p.scale);
      EXPECT_LE(std::abs(a[k] - o), 1e-9 * std::max(1.0, std::abs(o)));
    }
  }
}

TEST(Labelgen, NoAnnotationsGivesAllMinusOne) {
  std::mt19937_64 rng(3);
  const auto a = generate_affordance(random_cloud(rng, 30), ContactAnnotation{}, {});
  for (double v : a) EXPECT_EQ(v, -1.0);
}

TEST(Labelgen, Errors) {
  EXPECT_EQ(test::error_kind_of([] { generate_affordance({}, ContactAnnotation{{{0, 0, 0}}}, {}); }), ErrorKind::Data);
  const ContactAnnotation bad{{{NAN, 0, 0}}};
  EXPECT_EQ(test::error_kind_of([&] { generate_affordance({{0, 0, 0}}, bad, {}); }), ErrorKind::Data);
  EXPECT_ANY_THROW(generate_affordance({{0, 0, 0}}, {}, {0.0, 2.0}));
  EXPECT_ANY_THROW(generate_affordance({{0, 0, 0}}, {}, {0.01, -1.0}));
}

TEST(LabelgenProperty, RangeAndMonotonicity) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cloud = random_cloud(rng, 120, 0.05);
    const ContactAnnotation ann{random_cloud(rng, 4, 0.05)};
    const auto a = generate_affordance(cloud, ann, {0.01, 2.0});
    std::vector<double> d;
    for (const auto& p : cloud) d.push_back(min_distance_to_set(p, ann.points));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      EXPECT_GE(a[i], -1.0);
      EXPECT_LE(a[i], 1.0);
      for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (d[i] <= d[j]) EXPECT_GE(a[i], a[j]);
      }
    }
  }
}

TEST(LabelgenProperty, AnnotationOrderAndDuplicates) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto cloud = random_cloud(rng, 80, 0.05);
    auto ann = random_cloud(rng, 6, 0.05);
    const auto a = generate_affordance(cloud, ContactAnnotation{ann}, {});
    std::shuffle(ann.begin(), ann.end(), rng);
    EXPECT_EQ(generate_affordance(cloud, ContactAnnotation{ann}, {}), a);
    ann.push_back(ann[2]);
    ann.push_back(ann[0]);
    EXPECT_EQ(generate_affordance(cloud, ContactAnnotation{ann}, {}), a);
  }
}

TEST(LabelgenProperty, SaturationCore) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> sc(1.0, 5.0), u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelGenParams p{0.01, sc(rng)};
    const double r = saturation_radius(p);
    Eigen::Vector3d dir(u(rng), u(rng), u(rng));
    dir.normalize();
    const Point3 q = 0.999999 * r * dir;
    EXPECT_EQ(generate_affordance({q}, ContactAnnotation{{{0, 0, 0}}}, p)[0], 1.0);
  }
}

TEST(ContactPatch, Extremes) {
  std::mt19937_64 rng(4);
  const auto cloud = random_cloud(rng, 20);
  EXPECT_TRUE(extract_contact_patch(cloud, std::vector<double>(20, -1.0)).empty());
  EXPECT_EQ(extract_contact_patch(cloud, std::vector<double>(20, 1.0)), cloud);
}

TEST(ContactPatch, SignPredicateAndOrder) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto cloud = random_cloud(rng, 64);
  std::vector<double> a(64);
  for (auto& v : a) v = u(rng);
  a[3] = 0.0;  // ties are excluded
  PointCloud expect;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (a[i] > 0) expect.push_back(cloud[i]);
  }
  EXPECT_EQ(extract_contact_patch(cloud, a), expect);
}

TEST(ContactPatch, LengthMismatch) {
  EXPECT_EQ(test::error_kind_of([] { extract_contact_patch({{0, 0, 0}}, {0.5, 0.5}); }), ErrorKind::Data);
}
