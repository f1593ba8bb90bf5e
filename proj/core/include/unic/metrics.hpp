#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unic/model.hpp"

namespace unic {

struct LabeledFrame;
struct LoadedDataset;

/// Chamfer distance in mm between the predicted and ground-truth patches.
/// An empty predicted patch scores the cloud's bounding-box diagonal and sets
/// *empty when given.
double metric_all_contact(const AffordanceMap& pred, const PointCloud& cloud, const PointCloud& gt_patch,
                          bool* empty = nullptr);
/// Distance in mm from the predicted patch centroid to the ground-truth point.
double metric_single_contact(const AffordanceMap& pred, const PointCloud& cloud, const Point3& gt_point,
                             bool* empty = nullptr);
/// Mean |pred + 1|.
double metric_no_contact(const AffordanceMap& pred);

/// Running mean over frames of one metric cell.
struct MetricCell {
  double sum = 0.0;
  std::size_t frames = 0;
  std::size_t empty_patches = 0;
  std::size_t skipped = 0;  // contact frames whose ground-truth patch is empty

  void add(double v, bool empty = false);
  double mean() const;
  double empty_rate() const;
};

struct FrameSetSummary {
  std::vector<AffordanceMap> predictions;
  MetricCell all_contact;
  MetricCell single_contact;
  MetricCell no_contact;
};

struct EvalOptions {
  int workers = 1;
  int frame_stride = 1;
  LabelGenParams labels;
  int timing_repeats = 0;  // > 0 adds bench_inference stats per pattern
  int timing_warmup = 5;
};

/// Predictions and the three metrics for one presence pattern, averaged
/// uniformly per frame.
FrameSetSummary evaluate_frames(const UnicModel& model, const std::vector<LabeledFrame>& frames,
                                const ModalityPresence& presence, const EvalOptions& opt = {});

struct BenchStats {
  double mean_s = 0.0;
  double stddev_s = 0.0;
  int repeats = 0;
};

struct EvalReport {
  std::string variant;
  std::vector<std::string> patterns;
  // metric name -> pattern label -> cell
  std::map<std::string, std::map<std::string, MetricCell>> metrics;
  std::map<std::string, BenchStats> timing;
  std::vector<std::string> notices;

  /// Deterministic part only when include_timing is false.
  nlohmann::json to_json(bool include_timing = true) const;
  std::string to_csv() const;
  std::optional<double> value(const std::string& metric, const std::string& pattern) const;
};

inline constexpr const char* kAllContactMetric = "all_contact_chamfer_mm";
inline constexpr const char* kSingleContactMetric = "single_contact_error_mm";
inline constexpr const char* kNoContactMetric = "no_contact_mae";

/// Three metrics over the validation subsets for each of the five
/// modality-removal patterns. Empty subsets are skipped with a notice.
EvalReport eval_matrix(const UnicModel& model, const LoadedDataset& data, const EvalOptions& opt = {});

/// Wall-clock statistics of predict_frame after `warmup` untimed passes.
BenchStats bench_inference(const UnicModel& model, const FrameSample& frame, const ModalityPresence& presence,
                           int repeats = 100, int warmup = 5);

/// ASCII PLY with `x y z affordance` per vertex.
void write_ply(const PointCloud& cloud, const AffordanceMap& affordance, const std::filesystem::path& path);

}  // namespace unic
