#include "unic/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "unic/error.hpp"

namespace unic {

bool PointCloud::all_finite() const {
  return std::all_of(points_.begin(), points_.end(), [](const Point3& p) { return p.allFinite(); });
}

bool CropBox::contains(const Point3& p) const {
  return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
}

double min_distance_to_set(const Point3& p, const PointCloud& set) {
  if (set.empty()) throw_data_error("empty annotation set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : set) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

namespace {

// Mean over `from` of the distance to the nearest point in `to`.
double directed_mean_nn(const PointCloud& from, const PointCloud& to) {
  double sum = 0.0;
  for (const auto& p : from) sum += min_distance_to_set(p, to);
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw_data_error("chamfer distance of an empty cloud");
  return 0.5 * (directed_mean_nn(a, b) + directed_mean_nn(b, a));
}

PointCloud crop(const PointCloud& cloud, const CropBox& box) {
  PointCloud out;
  for (const auto& p : cloud) {
    if (box.contains(p)) out.push_back(p);
  }
  if (out.empty()) throw_data_error("crop produced empty cloud");
  return out;
}

std::vector<std::size_t> downsample_indices(std::size_t count, std::size_t target, std::uint64_t seed) {
  if (target == 0) throw_usage_error("downsample target must be at least 1");
  if (count == 0) throw_data_error("cannot downsample an empty cloud");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx;
  if (count >= target) {
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `target` slots are a uniform sample.
    for (std::size_t i = 0; i < target; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, count - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(target);
  } else {
    idx.reserve(target);
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    for (std::size_t i = 0; i < target; ++i) idx.push_back(pick(rng));
  }
  return idx;
}

PointCloud downsample(const PointCloud& cloud, std::size_t target, std::uint64_t seed) {
  const auto idx = downsample_indices(cloud.size(), target, seed);
  PointCloud out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cloud[i]);
  return out;
}

Point3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw_data_error("centroid of an empty cloud");
  Point3 sum = Point3::Zero();
  for (const auto& p : cloud) sum += p;
  return sum / static_cast<double>(cloud.size());
}

double bounding_diagonal(const PointCloud& cloud) {
  if (cloud.empty()) return 0.0;
  Point3 lo = cloud[0], hi = cloud[0];
  for (const auto& p : cloud) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

PointCloud transform(const PointCloud& cloud, const Eigen::Isometry3d& pose) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(pose * p);
  return out;
}

}  // namespace unic
