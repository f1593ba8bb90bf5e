#include "unic/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "unic/error.hpp"
#include "unic/metrics.hpp"
#include "unic/random.hpp"

namespace unic {

namespace {

const char* to_string(LossKind k) {
  return k == LossKind::AffordanceRegression ? "affordance-regression" : "chamfer-regression";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "affordance-regression") return LossKind::AffordanceRegression;
  if (s == "chamfer-regression") return LossKind::ChamferRegression;
  throw_usage_error("unknown loss '" + s + "'");
}

}  // namespace

// ---- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw_usage_error("batch size must be at least 1");
  if (epochs < 0) throw_usage_error("epoch count must be non-negative");
  if (regression_points < 1) throw_usage_error("regression point count must be at least 1");
  if (!(lr > 0.0) || !(eps > 0.0)) throw_usage_error("learning rate and epsilon must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw_usage_error("betas must be in [0, 1)");
  if (weight_decay < 0.0) throw_usage_error("weight decay must be non-negative");
  if (mask_ratio && !(*mask_ratio >= 0.0 && *mask_ratio <= 1.0)) throw_usage_error("mask ratio must be in [0, 1]");
  if (mask_ratio && *mask_ratio > 0.0 && variant != Variant::Unic) {
    throw_usage_error("only the unic variant trains with random masking");
  }
  if ((loss == LossKind::ChamferRegression) != (variant == Variant::E2E)) {
    throw_usage_error("the chamfer-regression loss goes with the e2e variant and only with it");
  }
  if (val_every < 0 || workers < 1 || query_points < 0 || frame_stride < 1) throw_usage_error("bad training schedule");
  if (!(mask_probability >= 0.0 && mask_probability <= 1.0)) throw_usage_error("mask_probability must be in [0, 1]");
  if (!(positive_fraction >= 0.0 && positive_fraction < 1.0)) throw_usage_error("positive_fraction must be in [0, 1)");
  if (!(smooth_l1_beta > 0.0)) throw_usage_error("smooth-L1 beta must be positive");
  labels.validate();
}

double TrainConfig::effective_mask_ratio(const ModelConfig& model) const {
  if (variant != Variant::Unic) return 0.0;
  return mask_ratio.value_or(model.mask_ratio);
}

TrainConfig TrainConfig::for_variant(Variant v) {
  TrainConfig c;
  c.variant = v;
  if (v != Variant::Unic) c.mask_ratio = 0.0;
  if (v == Variant::E2E) c.loss = LossKind::ChamferRegression;
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"batch_size", batch_size},
                      {"epochs", epochs},
                      {"lr", lr},
                      {"schedule", schedule == LrSchedule::Constant ? "constant" : "cosine"},
                      {"beta1", beta1},
                      {"beta2", beta2},
                      {"eps", eps},
                      {"weight_decay", weight_decay},
                      {"loss", to_string(loss)},
                      {"affordance_loss", to_string(affordance_loss)},
                      {"smooth_l1_beta", smooth_l1_beta},
                      {"variant", unic::to_string(variant)},
                      {"seed", seed},
                      {"regression_points", regression_points},
                      {"val_every", val_every},
                      {"workers", workers},
                      {"query_points", query_points},
                      {"positive_fraction", positive_fraction},
                      {"mask_probability", mask_probability},
                      {"frame_stride", frame_stride},
                      {"sigma", labels.sigma},
                      {"label_scale", labels.scale}};
  if (mask_ratio) j["mask_ratio"] = *mask_ratio;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("variant")) c = for_variant(variant_from_string(j.at("variant").get<std::string>()));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    if (j.contains("schedule")) {
      const auto s = j.at("schedule").get<std::string>();
      if (s != "constant" && s != "cosine") throw_usage_error("schedule must be 'constant' or 'cosine'");
      c.schedule = s == "constant" ? LrSchedule::Constant : LrSchedule::Cosine;
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("mask_ratio")) c.mask_ratio = j.at("mask_ratio").get<double>();
    if (j.contains("loss")) c.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    if (j.contains("affordance_loss")) {
      c.affordance_loss = affordance_loss_from_string(j.at("affordance_loss").get<std::string>());
    }
    c.smooth_l1_beta = j.value("smooth_l1_beta", c.smooth_l1_beta);
    c.seed = j.value("seed", c.seed);
    c.regression_points = j.value("regression_points", c.regression_points);
    c.val_every = j.value("val_every", c.val_every);
    c.workers = j.value("workers", c.workers);
    c.query_points = j.value("query_points", c.query_points);
    c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
    c.mask_probability = j.value("mask_probability", c.mask_probability);
    c.frame_stride = j.value("frame_stride", c.frame_stride);
    c.labels.sigma = j.value("sigma", c.labels.sigma);
    c.labels.scale = j.value("label_scale", c.labels.scale);
  } catch (const nlohmann::json::exception& e) {
    throw_usage_error(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- losses -----------------------------------------------------------------

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double bernoulli_kl(double y, double p) {
  return xlogx(y) + xlogx(1.0 - y) - y * std::log(p) - (1.0 - y) * std::log1p(-p);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::string to_string(AffordanceLoss k) {
  switch (k) {
    case AffordanceLoss::Mse: return "mse";
    case AffordanceLoss::SmoothL1: return "smooth-l1";
    case AffordanceLoss::Logistic: return "logistic";
  }
  return "?";
}

AffordanceLoss affordance_loss_from_string(const std::string& s) {
  if (s == "mse") return AffordanceLoss::Mse;
  if (s == "smooth-l1") return AffordanceLoss::SmoothL1;
  if (s == "logistic") return AffordanceLoss::Logistic;
  throw_usage_error("affordance_loss must be 'mse', 'smooth-l1' or 'logistic'");
}

ad::Var loss_affordance_logits(ad::Var logit, const Matrix& label) {
  if (logit.rows() != label.rows() || logit.cols() != label.cols()) {
    throw_data_error("prediction and label lengths differ");
  }
  // tanh(z) = 2 sigmoid(2z) - 1, so (a + 1) / 2 is a Bernoulli target for sigmoid(2z).
  ad::Tape& t = *logit.tape;
  const double n = static_cast<double>(label.size());
  Matrix slope(label.rows(), label.cols());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < label.size(); ++i) {
    const double z = 2.0 * logit.value().data()[i];
    const double y = std::clamp(0.5 * (label.data()[i] + 1.0), 0.0, 1.0);
    acc += softplus(z) - y * z + xlogx(y) + xlogx(1.0 - y);
    slope.data()[i] = 2.0 * (1.0 / (1.0 + std::exp(-z)) - y);
  }
  Matrix out(1, 1);
  out(0, 0) = acc / n;
  const int ip = logit.id;
  return t.push(std::move(out), {logit}, [ip, slope = std::move(slope), n, self = static_cast<int>(t.size())](ad::Tape& t) {
    if (Matrix* gp = t.grad_target(ip)) *gp += (t.grad(self)(0, 0) / n) * slope;
  });
}

double loss_affordance(const AffordanceMap& pred, const AffordanceMap& label, AffordanceLoss kind, double beta) {
  if (pred.size() != label.size()) throw_data_error("prediction and label lengths differ");
  if (pred.empty()) throw_data_error("empty affordance map");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - label[i];
    if (kind == AffordanceLoss::Logistic) {
      const double p = std::clamp(0.5 * (pred[i] + 1.0), 1e-12, 1.0 - 1e-12);
      const double y = std::clamp(0.5 * (label[i] + 1.0), 0.0, 1.0);
      acc += bernoulli_kl(y, p);
    } else if (kind == AffordanceLoss::Mse) {
      acc += d * d;
    } else {
      const double a = std::abs(d);
      acc += a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
    }
  }
  return acc / static_cast<double>(pred.size());
}

ad::Var loss_affordance(ad::Var pred, const Matrix& label, AffordanceLoss kind, double beta) {
  if (pred.rows() != label.rows() || pred.cols() != label.cols()) throw_data_error("prediction and label lengths differ");
  if (kind == AffordanceLoss::Mse) return ad::mse(pred, label);
  if (kind == AffordanceLoss::Logistic) {
    throw_usage_error("the logistic affordance loss takes head logits, see loss_affordance_logits");
  }
  ad::Tape& t = *pred.tape;
  const Matrix diff = pred.value() - label;
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.unaryExpr([beta](double d) {
                    const double a = std::abs(d);
                    return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
                  }).sum() / n;
  Matrix slope = diff.unaryExpr([beta](double d) { return std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0); });
  const int ip = pred.id;
  return t.push(std::move(out), {pred}, [ip, slope = std::move(slope), n, self = static_cast<int>(t.size())](ad::Tape& t) {
    if (Matrix* gp = t.grad_target(ip)) *gp += (t.grad(self)(0, 0) / n) * slope;
  });
}

namespace {

struct ChamferTerms {
  double value = 0.0;
  std::vector<Eigen::Index> pred_to_gt;
  std::vector<Eigen::Index> gt_to_pred;
};

ChamferTerms squared_chamfer(const Matrix& p, const Matrix& g) {
  ChamferTerms c;
  const Eigen::Index n = p.rows(), m = g.rows();
  c.pred_to_gt.assign(static_cast<std::size_t>(n), 0);
  c.gt_to_pred.assign(static_cast<std::size_t>(m), 0);
  std::vector<double> best_g(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  double sum_p = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = (p.row(i) - g.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        c.pred_to_gt[static_cast<std::size_t>(i)] = j;
      }
      if (d < best_g[static_cast<std::size_t>(j)]) {
        best_g[static_cast<std::size_t>(j)] = d;
        c.gt_to_pred[static_cast<std::size_t>(j)] = i;
      }
    }
    sum_p += best;
  }
  const double sum_g = std::accumulate(best_g.begin(), best_g.end(), 0.0);
  c.value = 0.5 * (sum_p / static_cast<double>(n) + sum_g / static_cast<double>(m));
  return c;
}

Matrix points_matrix(const PointCloud& pc) {
  Matrix m(static_cast<Eigen::Index>(pc.size()), 3);
  for (std::size_t i = 0; i < pc.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pc[i].transpose();
  return m;
}

}  // namespace

double loss_chamfer_regression(const PointCloud& pred, const PointCloud& gt, bool contact) {
  if (pred.empty()) throw_data_error("empty prediction");
  const Matrix p = points_matrix(pred);
  if (!contact) return p.rowwise().squaredNorm().mean();
  if (pred.size() != gt.size()) throw_data_error("prediction and target sizes differ");
  return squared_chamfer(p, points_matrix(gt)).value;
}

ad::Var loss_chamfer_regression(ad::Var pred, const Matrix& gt, bool contact) {
  ad::Tape& t = *pred.tape;
  const Matrix& p = pred.value();
  const int ip = pred.id;
  const auto n = static_cast<double>(p.rows());
  Matrix out(1, 1);
  if (!contact) {
    out(0, 0) = p.rowwise().squaredNorm().mean();
    return t.push(std::move(out), {pred}, [ip, n, self = static_cast<int>(t.size())](ad::Tape& t) {
      if (Matrix* gp = t.grad_target(ip)) *gp += (2.0 * t.grad(self)(0, 0) / n) * t.value(ip);
    });
  }
  if (p.rows() != gt.rows() || gt.cols() != 3) throw_data_error("prediction and target sizes differ");
  ChamferTerms c = squared_chamfer(p, gt);
  out(0, 0) = c.value;
  const auto m = static_cast<double>(gt.rows());
  return t.push(std::move(out), {pred},
                [ip, gt, n, m, c = std::move(c), self = static_cast<int>(t.size())](ad::Tape& t) {
                  Matrix* gp = t.grad_target(ip);
                  if (!gp) return;
                  const double g = t.grad(self)(0, 0);
                  const Matrix& p = t.value(ip);
                  for (Eigen::Index i = 0; i < p.rows(); ++i) {
                    gp->row(i) += (g / n) * (p.row(i) - gt.row(c.pred_to_gt[static_cast<std::size_t>(i)]));
                  }
                  for (Eigen::Index j = 0; j < gt.rows(); ++j) {
                    const Eigen::Index i = c.gt_to_pred[static_cast<std::size_t>(j)];
                    gp->row(i) += (g / m) * (p.row(i) - gt.row(j));
                  }
                });
}

PointCloud make_regression_targets(const PointCloud& cloud, const AffordanceMap& label, int l, std::uint64_t seed) {
  if (l < 1) throw_usage_error("regression point count must be at least 1");
  const PointCloud patch = extract_contact_patch(cloud, label);
  if (patch.empty()) {
    PointCloud zeros;
    for (int i = 0; i < l; ++i) zeros.push_back(Point3::Zero());
    return zeros;
  }
  return downsample(patch, static_cast<std::size_t>(l), seed);
}

void write_log_csv(const std::vector<LogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_data_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "epoch,split,metric,value\n";
  for (const auto& r : log) out << r.epoch << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
}

// ---- data -------------------------------------------------------------------

LoadedDataset LoadedDataset::load(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  std::vector<Episode> eps;
  eps.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) eps.push_back(read_episode(dir / e.meta.file));
  return from_episodes(std::move(eps), manifest);
}

LoadedDataset LoadedDataset::from_episodes(std::vector<Episode> episodes, const DatasetManifest& manifest) {
  if (episodes.size() != manifest.entries.size()) throw_data_error("manifest and episode count differ");
  LoadedDataset d;
  d.manifest = manifest;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (episodes[i].id != manifest.entries[i].meta.id) throw_data_error("episode '" + episodes[i].id + "' is not in the manifest at that position");
    d.splits.push_back(manifest.entries[i].split);
  }
  d.episodes = std::move(episodes);
  return d;
}

std::vector<LabeledFrame> LoadedDataset::frames(Split split, const LabelGenParams& params, int stride) const {
  std::vector<LabeledFrame> out;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    if (splits[e] != split) continue;
    const auto& frames = episodes[e].frames;
    for (std::size_t f = 0; f < frames.size(); f += static_cast<std::size_t>(stride)) {
      LabeledFrame lf;
      lf.frame = &frames[f];
      lf.label = generate_affordance(frames[f].cloud, frames[f].annotation, params);
      lf.patch = extract_contact_patch(frames[f].cloud, lf.label);
      lf.episode = e;
      const auto& entry = manifest.entries[e];
      if (manifest.partitioned && split == Split::Valid) {
        lf.all_contact = entry.all_contact;
        lf.single_contact = entry.single_contact;
        lf.no_contact = entry.no_contact;
      } else {
        lf.all_contact = episodes[e].contact();
        lf.single_contact = episodes[e].contact() && episodes[e].mode == ContactMode::Point;
        lf.no_contact = !episodes[e].contact();
      }
      out.push_back(std::move(lf));
    }
  }
  return out;
}

// ---- training loop ----------------------------------------------------------

namespace {

struct Sample {
  FrameInputs inputs;
  Matrix label;        // M x 1
  Matrix targets;      // L x 3, scaled, e2e only
  bool contact = false;
};

struct Adam {
  ad::Gradients m, v;
  std::vector<bool> decay;
  long step = 0;

  explicit Adam(const ad::ParameterStore& ps) {
    for (const auto& p : ps) {
      m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      decay.push_back(p.name.size() > 7 && p.name.ends_with(".weight"));
    }
  }

  void update(ad::ParameterStore& ps, const ad::Gradients& g, const TrainConfig& cfg, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto& w = ps[i].value;
      if (decay[i] && cfg.weight_decay > 0.0) w *= 1.0 - lr * cfg.weight_decay;
      if (g[i].size() == 0) continue;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i].cwiseAbs2();
      w.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + cfg.eps);
    }
  }
};

Matrix column(const AffordanceMap& a) { return Eigen::Map<const Matrix>(a.data(), static_cast<Eigen::Index>(a.size()), 1); }

struct StepOutput {
  ad::Gradients grads;
  double loss = 0.0;
};

StepOutput sample_step(const UnicModel& model, const Sample& s, const TrainConfig& cfg, double ratio,
                       std::uint64_t sample_seed) {
  ad::Tape t(model.params());
  ForwardOptions opt;
  if (cfg.mask_probability < 1.0) {
    std::mt19937_64 coin(derive_seed(sample_seed, {4}));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(coin) >= cfg.mask_probability) ratio = 0.0;
  }
  opt.mask_ratio = ratio;
  opt.mask_seed = derive_seed(sample_seed, {1});
  Matrix query, label;
  const Matrix* target = &s.label;
  const auto m = static_cast<std::size_t>(s.inputs.cloud.rows());
  if (!model.regresses_points() && cfg.query_points > 0 && static_cast<std::size_t>(cfg.query_points) < m) {
    const auto q = static_cast<std::size_t>(cfg.query_points);
    std::vector<std::size_t> positive;
    for (std::size_t k = 0; k < m; ++k) {
      if (s.label(static_cast<Eigen::Index>(k), 0) > 0.0) positive.push_back(k);
    }
    const std::size_t n_pos =
        positive.empty() ? 0 : static_cast<std::size_t>(std::lround(cfg.positive_fraction * static_cast<double>(q)));
    auto idx = downsample_indices(m, q - n_pos, derive_seed(sample_seed, {2}));
    std::mt19937_64 pick(derive_seed(sample_seed, {3}));
    for (std::size_t k = 0; k < n_pos; ++k) idx.push_back(positive[pick() % positive.size()]);
    query.resize(static_cast<Eigen::Index>(idx.size()), 3);
    label.resize(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      query.row(static_cast<Eigen::Index>(k)) = s.inputs.cloud.row(static_cast<Eigen::Index>(idx[k]));
      label(static_cast<Eigen::Index>(k), 0) = s.label(static_cast<Eigen::Index>(idx[k]), 0);
    }
    opt.query = &query;
    target = &label;
  }
  const auto r = model.forward(t, s.inputs, opt);
  const ad::Var loss = model.regresses_points() ? loss_chamfer_regression(r.output, s.targets, s.contact)
                                                : cfg.affordance_loss == AffordanceLoss::Logistic
                                                    ? loss_affordance_logits(r.logit, *target)
                                                    : loss_affordance(r.output, *target, cfg.affordance_loss, cfg.smooth_l1_beta);
  StepOutput out;
  out.loss = loss.value()(0, 0);
  if (!std::isfinite(out.loss)) return out;
  t.backward(loss);
  t.accumulate(out.grads);
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads, each taking a
/// contiguous block. Exceptions are rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < w; ++k) {
    threads.emplace_back([&, k] {
      try {
        for (std::size_t i = k * n / w; i < (k + 1) * n / w; ++i) fn(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Sample> make_samples(const std::vector<LabeledFrame>& frames, const UnicModel& model, const TrainConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& lf = frames[i];
    Sample s;
    s.inputs = make_inputs(*lf.frame, model.config());
    s.label = column(lf.label);
    s.contact = lf.frame->contact;
    if (model.regresses_points()) {
      const auto targets = make_regression_targets(lf.frame->cloud, lf.label, cfg.regression_points,
                                                   derive_seed(cfg.seed, {0x7461726765ULL, i}));
      s.targets = points_matrix(targets) * model.config().coord_scale;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TrainResult train(UnicModel model, const LoadedDataset& data, const TrainConfig& cfg, EpochCallback on_epoch) {
  cfg.validate();
  if (model.config().variant != cfg.variant) {
    throw_usage_error("model variant '" + to_string(model.config().variant) + "' does not match training variant '" +
                      to_string(cfg.variant) + "'");
  }
  if (model.regresses_points() && model.config().regression_points != cfg.regression_points) {
    throw_usage_error("model and training config disagree on the regression point count");
  }
  const auto train_frames = data.frames(Split::Train, cfg.labels, cfg.frame_stride);
  if (train_frames.empty()) throw_data_error("training split is empty");
  const auto valid_frames = data.frames(Split::Valid, cfg.labels, cfg.frame_stride);

  const auto samples = make_samples(train_frames, model, cfg);
  const double ratio = cfg.effective_mask_ratio(model.config());
  Adam adam(model.params());
  TrainResult result{model, {}};
  UnicModel& m = result.model;

  std::vector<std::size_t> order(samples.size());
  const std::size_t steps_per_epoch = (samples.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                      static_cast<std::size_t>(cfg.batch_size);
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  double step = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      std::vector<StepOutput> outs(count);
      parallel_for(count, cfg.workers, [&](std::size_t k) {
        const std::size_t pos = start + k;
        const std::uint64_t sample_seed =
            derive_seed(cfg.seed, {0x73616d706cULL, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(pos)});
        outs[k] = sample_step(m, samples[order[pos]], cfg, ratio, sample_seed);
      });
      ad::Gradients total;
      double batch_loss = 0.0;
      for (const auto& o : outs) {
        if (!std::isfinite(o.loss)) {
          throw_numeric_error("loss diverged (NaN or inf) in epoch " + std::to_string(epoch) + " at sample " +
                              std::to_string(start));
        }
        batch_loss += o.loss;
        ad::add_into(total, o.grads);
      }
      for (auto& g : total) g /= static_cast<double>(count);
      const double lr = cfg.schedule == LrSchedule::Constant
                            ? cfg.lr
                            : 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * step / total_steps));
      adam.update(m.params(), total, cfg, lr);
      step += 1.0;
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(samples.size());
    result.log.push_back({epoch, "train", "loss", epoch_loss});
    if (on_epoch) on_epoch(epoch, epoch_loss);

    if (cfg.val_every > 0 && (epoch % cfg.val_every == 0 || epoch == cfg.epochs) && !valid_frames.empty()) {
      EvalOptions eo;
      eo.workers = cfg.workers;
      const auto s = evaluate_frames(m, valid_frames, ModalityPresence::all(), eo);
      double vloss = 0.0;
      for (std::size_t i = 0; i < valid_frames.size(); ++i) {
        vloss += loss_affordance(s.predictions[i], valid_frames[i].label, cfg.affordance_loss, cfg.smooth_l1_beta);
      }
      result.log.push_back({epoch, "valid", "loss", vloss / static_cast<double>(valid_frames.size())});
      if (s.all_contact.frames) result.log.push_back({epoch, "valid", "all_contact_chamfer_mm", s.all_contact.mean()});
      if (s.single_contact.frames) result.log.push_back({epoch, "valid", "single_contact_error_mm", s.single_contact.mean()});
      if (s.no_contact.frames) result.log.push_back({epoch, "valid", "no_contact_mae", s.no_contact.mean()});
    }
  }
  return result;
}

// ---- gradient check ---------------------------------------------------------

std::string parameter_block(const std::string& name) {
  if (name.starts_with("tactile.")) return "tactile_encoder";
  if (name.starts_with("rotation.")) return "rotation_mlp";
  if (name.starts_with("wrench.")) return "wrench_mlp";
  if (name.starts_with("points.")) return "point_encoder";
  if (name == "fusion.mask_token") return "mask_token";
  if (name.starts_with("fusion.")) return "trunk";
  if (name.starts_with("head.")) return "head";
  if (name.starts_with("regression.")) return "regression_head";
  return "other";
}

bool GradCheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [&](const auto& b) { return b.max_rel_error < tolerance; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_error);
  return w;
}

namespace {

// Entries whose magnitude is below this are compared on an absolute scale.
constexpr double kGradFloor = 1e-6;

double relative_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor}); }

template <typename LossFn>
GradCheckReport compare(ad::ParameterStore& ps, LossFn&& loss_and_grad, const GradCheckOptions& opt,
                        const std::function<std::string(const std::string&)>& block_of) {
  ad::Gradients analytic;
  loss_and_grad(&analytic);
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string block = block_of(ps[i].name);
    auto it = std::find_if(report.blocks.begin(), report.blocks.end(), [&](const auto& b) { return b.block == block; });
    if (it == report.blocks.end()) {
      report.blocks.push_back({block, 0, 0.0, 0.0});
      it = report.blocks.end() - 1;
    }
    auto& value = ps[i].value;
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + opt.step;
      const double up = loss_and_grad(nullptr);
      value.data()[k] = saved - opt.step;
      const double down = loss_and_grad(nullptr);
      value.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = i < analytic.size() && analytic[i].size() ? analytic[i].data()[k] : 0.0;
      it->scalars += 1;
      it->max_rel_error = std::max(it->max_rel_error, relative_error(a, numeric));
      it->max_abs_gradient = std::max(it->max_abs_gradient, std::abs(a));
    }
  }
  return report;
}

FrameSample random_frame(const ModelConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  FrameSample f;
  for (int i = 0; i < cfg.points; ++i) f.cloud.push_back(Point3(0.05 * n01(rng), 0.05 * n01(rng), 0.5 + 0.05 * n01(rng)));
  for (auto& q : f.rotation) q = n01(rng);
  for (auto& w : f.wrench) w = 3.0 * n01(rng);
  f.tactile_left = TactileMap(cfg.tactile_h, cfg.tactile_w);
  f.tactile_right = TactileMap(cfg.tactile_h, cfg.tactile_w);
  for (auto& v : f.tactile_left.data) v = 0.5 * n01(rng);
  for (auto& v : f.tactile_right.data) v = 0.5 * n01(rng);
  return f;
}

}  // namespace

GradCheckReport gradient_check(GradCheckTarget target, const GradCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);

  if (target == GradCheckTarget::Linear) {
    ad::ParameterStore ps;
    const auto layer = nn::Linear::create(ps, "linear", 5, 3, rng);
    ps[layer.bias].value = nn::randn(rng, 1, 3, 0.3);
    const Matrix x = nn::randn(rng, 7, 5, 1.0);
    const Matrix y = nn::randn(rng, 7, 3, 1.0);
    auto f = [&](ad::Gradients* g) {
      ad::Tape t(ps, g != nullptr);
      const ad::Var loss = ad::mse(layer(t, t.constant(x)), y);
      if (g) {
        t.backward(loss);
        t.accumulate(*g);
      }
      return loss.value()(0, 0);
    };
    return compare(ps, f, opt, [](const std::string&) { return std::string("linear"); });
  }

  ModelConfig cfg;
  cfg.variant = opt.variant;
  cfg.token_dim = 8;
  cfg.tokens = 2;
  cfg.patch = 2;
  cfg.tactile_h = 4;
  cfg.tactile_w = 4;
  cfg.point_widths = {8, 8};
  cfg.mlp_hidden = 8;
  cfg.head_hidden = 8;
  cfg.points = 16;
  cfg.regression_points = 4;
  cfg.seed = opt.seed;
  UnicModel model(cfg);
  auto& ps = model.params();
  // Non-zero biases and norm parameters so every term of the graph matters.
  for (auto& p : ps) {
    if (p.name.ends_with(".bias")) p.value = nn::randn(rng, p.value.rows(), p.value.cols(), 0.1);
    if (p.name.ends_with(".gain")) p.value.array() += nn::randn(rng, p.value.rows(), p.value.cols(), 0.1).array();
  }
  if (target == GradCheckTarget::HeadSaturated) {
    // Push the output pre-activations deep into the flat part of tanh.
    auto& w = ps[model.head().output().weight].value;
    w *= 12.0 / std::max(w.cwiseAbs().maxCoeff(), 1e-12);
    ps[model.head().output().bias].value.setConstant(2.0);
  }

  const FrameInputs in = make_inputs(random_frame(cfg, rng), cfg);
  const bool e2e = model.regresses_points();
  const Matrix label = Matrix::NullaryExpr(cfg.points, 1, [&] { return u(rng); });
  // Regression targets scattered around the (scaled) cloud centroid, where
  // the regressed points start out.
  Matrix targets = nn::randn(rng, cfg.regression_points, 3, 0.5);
  targets.rowwise() += in.cloud.colwise().mean() * cfg.coord_scale;

  ModalityPresence no_tactile = ModalityPresence::all();
  no_tactile.tactile = false;
  const double ratio = cfg.variant == Variant::Unic ? 0.5 : 0.0;
  // Pass 1 exercises every encoder unmasked; pass 2 routes the mask token
  // through substitution and random masking.
  auto f = [&](ad::Gradients* g) {
    double total = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      ad::Tape t(ps, g != nullptr);
      ForwardOptions fo;
      if (pass == 1) {
        fo.presence = no_tactile;
        fo.mask_ratio = ratio;
        fo.mask_seed = 3;
      }
      const auto r = model.forward(t, in, fo);
      const ad::Var loss = e2e ? loss_chamfer_regression(r.output, targets, true) : ad::mse(r.output, label);
      total += loss.value()(0, 0);
      if (g) {
        t.backward(loss);
        t.accumulate(*g);
      }
    }
    return total;
  };
  return compare(ps, f, opt, parameter_block);
}

}  // namespace unic
