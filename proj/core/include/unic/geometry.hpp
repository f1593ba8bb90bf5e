#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace unic {

/// A 3D point in meters. Clouds live in the camera frame.
using Point3 = Eigen::Vector3d;

/// Ordered point set. Order is significant: affordance maps are
/// index-aligned with the cloud they were computed on.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points) : points_(std::move(points)) {}
  PointCloud(std::initializer_list<Point3> points) : points_(points) {}

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  const Point3& operator[](std::size_t i) const { return points_[i]; }
  Point3& operator[](std::size_t i) { return points_[i]; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }
  auto begin() { return points_.begin(); }
  auto end() { return points_.end(); }

  void push_back(const Point3& p) { points_.push_back(p); }
  void reserve(std::size_t n) { points_.reserve(n); }

  const std::vector<Point3>& points() const noexcept { return points_; }

  bool all_finite() const;

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

 private:
  std::vector<Point3> points_;
};

/// Closed axis-aligned box.
struct CropBox {
  Point3 min_corner;
  Point3 max_corner;

  bool contains(const Point3& p) const;
};

/// Minimum Euclidean distance from `p` to any member of `set`.
/// Throws a data error on an empty set.
double min_distance_to_set(const Point3& p, const PointCloud& set);

/// Symmetric Chamfer distance in meters:
///   0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|)
/// with Euclidean (unsquared) distances.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

/// Points inside the closed box, original order preserved.
PointCloud crop(const PointCloud& cloud, const CropBox& box);

/// Uniform random subsample to exactly `target` points. Without replacement
/// when the cloud is large enough, with replacement otherwise.
PointCloud downsample(const PointCloud& cloud, std::size_t target, std::uint64_t seed);

/// Indices chosen by `downsample` for a cloud of `count` points.
std::vector<std::size_t> downsample_indices(std::size_t count, std::size_t target, std::uint64_t seed);

Point3 centroid(const PointCloud& cloud);

/// Length of the axis-aligned bounding-box diagonal.
double bounding_diagonal(const PointCloud& cloud);

PointCloud transform(const PointCloud& cloud, const Eigen::Isometry3d& pose);

}  // namespace unic
