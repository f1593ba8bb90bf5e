#include "unic/labelgen.hpp"

#include <algorithm>
#include <cmath>

#include "unic/error.hpp"

namespace unic {

void LabelGenParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw_usage_error("label sigma must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw_usage_error("label scale must be positive");
}

AffordanceMap generate_affordance(const PointCloud& cloud, const ContactAnnotation& ann,
                                  const LabelGenParams& params) {
  params.validate();
  if (cloud.empty()) throw_data_error("cannot label an empty cloud");
  if (!ann.points.all_finite()) throw_data_error("non-finite annotation coordinates");

  AffordanceMap out(cloud.size(), -1.0);
  if (!ann.is_contact()) return out;

  const double inv_two_sigma_sq = 1.0 / (2.0 * params.sigma * params.sigma);
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const double d = min_distance_to_set(cloud[k], ann.points);
    const double y = std::exp(-d * d * inv_two_sigma_sq);
    out[k] = 2.0 * std::clamp(params.scale * y, 0.0, 1.0) - 1.0;
  }
  return out;
}

PointCloud extract_contact_patch(const PointCloud& cloud, const std::vector<double>& affordance) {
  if (cloud.size() != affordance.size()) throw_data_error("affordance length does not match cloud");
  PointCloud patch;
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    if (affordance[k] > 0.0) patch.push_back(cloud[k]);
  }
  return patch;
}

double saturation_radius(const LabelGenParams& params) {
  if (params.scale <= 1.0) return 0.0;
  return params.sigma * std::sqrt(2.0 * std::log(params.scale));
}

}  // namespace unic
