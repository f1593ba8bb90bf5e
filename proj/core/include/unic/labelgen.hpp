#pragma once

#include <vector>

#include "unic/geometry.hpp"

namespace unic {

/// Sparse contact annotation. An empty set marks a no-contact frame.
struct ContactAnnotation {
  PointCloud points;

  bool is_contact() const noexcept { return !points.empty(); }
};

struct LabelGenParams {
  double sigma = 0.010;  // kernel bandwidth, meters
  double scale = 2.0;    // pre-clamp gain

  void validate() const;
};

/// Per-point scores in [-1, 1], index-aligned with a PointCloud.
using AffordanceMap = std::vector<double>;

/// Dense affordance labels from sparse annotations. Each point's distance to
/// the nearest annotation goes through a Gaussian kernel, is scaled and
/// clamped to [0, 1], then mapped to [-1, 1]. No annotations -> all -1.
AffordanceMap generate_affordance(const PointCloud& cloud, const ContactAnnotation& ann,
                                  const LabelGenParams& params);

/// Points with affordance strictly above zero, order preserved. May be empty.
PointCloud extract_contact_patch(const PointCloud& cloud, const std::vector<double>& affordance);

/// Radius within which a point saturates at +1 (zero when scale <= 1).
double saturation_radius(const LabelGenParams& params);

}  // namespace unic
