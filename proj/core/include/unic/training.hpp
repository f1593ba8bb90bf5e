#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unic/dataset.hpp"
#include "unic/model.hpp"

namespace unic {

enum class LossKind { AffordanceRegression, ChamferRegression };
/// Logistic is the Bernoulli KL between (label + 1) / 2 and sigmoid(2 z) for
/// the head pre-activation z; it does not vanish where tanh saturates.
enum class AffordanceLoss { Mse, SmoothL1, Logistic };
std::string to_string(AffordanceLoss k);
AffordanceLoss affordance_loss_from_string(const std::string& s);
enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
  int batch_size = 16;
  int epochs = 50;
  double lr = 1e-3;
  LrSchedule schedule = LrSchedule::Constant;  // cosine decays to zero over all steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled, weight matrices only
  std::optional<double> mask_ratio;  // unset: the model config's ratio
  double mask_probability = 1.0;     // chance that a training sample is masked at all
  LossKind loss = LossKind::AffordanceRegression;
  AffordanceLoss affordance_loss = AffordanceLoss::Mse;
  double smooth_l1_beta = 0.1;
  Variant variant = Variant::Unic;
  std::uint64_t seed = 0;
  int regression_points = 32;  // L
  int val_every = 1;           // epochs between validations, 0 disables
  int workers = 1;
  int query_points = 0;        // head sample points per training frame, 0 = whole cloud
  double positive_fraction = 0.0;  // share of those drawn from label > 0 points, with replacement
  int frame_stride = 1;        // use every n-th frame of each episode
  LabelGenParams labels;

  void validate() const;
  double effective_mask_ratio(const ModelConfig& model) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Defaults for a variant: no-mask, e2e and visual train with ratio 0, and
  /// e2e uses the Chamfer regression loss.
  static TrainConfig for_variant(Variant v);
};

/// Mean squared error (or smooth-L1) between a predicted and a target map.
double loss_affordance(const AffordanceMap& pred, const AffordanceMap& label,
                       AffordanceLoss kind = AffordanceLoss::Mse, double beta = 0.1);
/// Differentiable form on a Q x 1 prediction.
ad::Var loss_affordance(ad::Var pred, const Matrix& label, AffordanceLoss kind = AffordanceLoss::Mse,
                        double beta = 0.1);

/// Logistic loss on Q x 1 head logits.
ad::Var loss_affordance_logits(ad::Var logit, const Matrix& label);

/// Symmetric Chamfer loss with squared distances. For a no-contact frame the
/// target is the origin and the loss is the mean squared norm of the prediction.
double loss_chamfer_regression(const PointCloud& pred, const PointCloud& gt, bool contact = true);
ad::Var loss_chamfer_regression(ad::Var pred, const Matrix& gt, bool contact = true);

/// Positive-affordance points downsampled to L (with replacement when fewer);
/// L origin points when nothing is positive.
PointCloud make_regression_targets(const PointCloud& cloud, const AffordanceMap& label, int l, std::uint64_t seed);

struct LogRow {
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

void write_log_csv(const std::vector<LogRow>& log, const std::filesystem::path& path);

/// In-memory training examples: every used frame with its dense label.
struct LabeledFrame {
  const FrameSample* frame = nullptr;
  AffordanceMap label;
  PointCloud patch;  // ground-truth contact patch (empty for no-contact)
  std::size_t episode = 0;
  bool all_contact = false;
  bool single_contact = false;
  bool no_contact = false;
};

struct LoadedDataset {
  std::vector<Episode> episodes;
  std::vector<Split> splits;
  DatasetManifest manifest;

  static LoadedDataset load(const DatasetManifest& manifest, const std::filesystem::path& dir);
  static LoadedDataset from_episodes(std::vector<Episode> episodes, const DatasetManifest& manifest);
  std::vector<LabeledFrame> frames(Split split, const LabelGenParams& params, int stride = 1) const;
};

struct TrainResult {
  UnicModel model;
  std::vector<LogRow> log;
};

/// Called after every epoch with the epoch index and mean training loss.
using EpochCallback = std::function<void(int, double)>;

/// Seeded AdamW training. Per-sample gradients are reduced in a fixed order,
/// so results do not depend on `workers`. Throws a numeric error on a NaN loss.
TrainResult train(UnicModel model, const LoadedDataset& data, const TrainConfig& cfg, EpochCallback on_epoch = {});

/// Gradient verification targets.
enum class GradCheckTarget { Linear, Model, HeadSaturated };

struct GradCheckEntry {
  std::string block;
  std::size_t scalars = 0;
  double max_rel_error = 0.0;
  double max_abs_gradient = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> blocks;
  double tolerance = 0.0;
  bool passed() const;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  Variant variant = Variant::Unic;
};

/// Compares analytic parameter gradients with central finite differences on
/// a small random configuration (D=8, T=2, M=16).
GradCheckReport gradient_check(GradCheckTarget target, const GradCheckOptions& opt = {});

/// Parameter block a parameter name belongs to in gradient reports.
std::string parameter_block(const std::string& name);

}  // namespace unic
