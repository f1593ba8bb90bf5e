#include "unic/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "unic/error.hpp"
#include "unic/training.hpp"

namespace unic {

double metric_all_contact(const AffordanceMap& pred, const PointCloud& cloud, const PointCloud& gt_patch, bool* empty) {
  if (gt_patch.empty()) throw_data_error("ground-truth patch is empty");
  const PointCloud patch = extract_contact_patch(cloud, pred);
  if (empty) *empty = patch.empty();
  if (patch.empty()) return bounding_diagonal(cloud) * 1000.0;
  return chamfer_distance(patch, gt_patch) * 1000.0;
}

double metric_single_contact(const AffordanceMap& pred, const PointCloud& cloud, const Point3& gt_point, bool* empty) {
  const PointCloud patch = extract_contact_patch(cloud, pred);
  if (empty) *empty = patch.empty();
  if (patch.empty()) return bounding_diagonal(cloud) * 1000.0;
  return (centroid(patch) - gt_point).norm() * 1000.0;
}

double metric_no_contact(const AffordanceMap& pred) {
  if (pred.empty()) throw_data_error("empty affordance map");
  double acc = 0.0;
  for (double v : pred) acc += std::abs(v + 1.0);
  return acc / static_cast<double>(pred.size());
}

void MetricCell::add(double v, bool empty) {
  sum += v;
  ++frames;
  if (empty) ++empty_patches;
}

double MetricCell::mean() const { return frames ? sum / static_cast<double>(frames) : 0.0; }

double MetricCell::empty_rate() const {
  return frames ? static_cast<double>(empty_patches) / static_cast<double>(frames) : 0.0;
}

namespace {

struct FrameScores {
  std::optional<std::pair<double, bool>> all, single;
  std::optional<double> none;
  bool skipped = false;
};

}  // namespace

FrameSetSummary evaluate_frames(const UnicModel& model, const std::vector<LabeledFrame>& frames,
                                const ModalityPresence& presence, const EvalOptions& opt) {
  FrameSetSummary s;
  s.predictions.resize(frames.size());
  std::vector<FrameScores> scores(frames.size());
  auto work = [&](std::size_t i) {
    const auto& lf = frames[i];
    const auto& cloud = lf.frame->cloud;
    auto& pred = s.predictions[i];
    pred = model.predict_affordance(*lf.frame, presence);
    auto& sc = scores[i];
    if (lf.all_contact) {
      if (lf.patch.empty()) {
        sc.skipped = true;
      } else {
        bool empty = false;
        const double v = metric_all_contact(pred, cloud, lf.patch, &empty);
        sc.all = {v, empty};
      }
    }
    if (lf.single_contact) {
      bool empty = false;
      const double v = metric_single_contact(pred, cloud, centroid(lf.frame->annotation.points), &empty);
      sc.single = {v, empty};
    }
    if (lf.no_contact) sc.none = metric_no_contact(pred);
  };

  const std::size_t n = frames.size();
  const auto w = std::min<std::size_t>(static_cast<std::size_t>(std::max(opt.workers, 1)), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < w; ++k) {
      threads.emplace_back([&, k] {
        try {
          for (std::size_t i = k * n / w; i < (k + 1) * n / w; ++i) work(i);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& sc : scores) {
    if (sc.all) s.all_contact.add(sc.all->first, sc.all->second);
    if (sc.skipped) ++s.all_contact.skipped;
    if (sc.single) s.single_contact.add(sc.single->first, sc.single->second);
    if (sc.none) s.no_contact.add(*sc.none);
  }
  return s;
}

// ---- report -----------------------------------------------------------------

nlohmann::json EvalReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["variant"] = variant;
  j["patterns"] = patterns;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [metric, cells] : metrics) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [pattern, c] : cells) {
      row[pattern] = {{"value", c.mean()}, {"frames", c.frames}, {"empty_patch_rate", c.empty_rate()},
                      {"skipped", c.skipped}};
    }
    m[metric] = row;
  }
  j["metrics"] = m;
  j["notices"] = notices;
  if (include_timing && !timing.empty()) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [pattern, b] : timing) t[pattern] = {{"mean_s", b.mean_s}, {"stddev_s", b.stddev_s}, {"repeats", b.repeats}};
    j["timing"] = t;
  }
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "metric,pattern,value,frames,empty_patch_rate\n";
  for (const auto& [metric, cells] : metrics) {
    for (const auto& p : patterns) {
      const auto it = cells.find(p);
      if (it == cells.end()) continue;
      out << metric << ",\"" << p << "\"," << it->second.mean() << ',' << it->second.frames << ','
          << it->second.empty_rate() << '\n';
    }
  }
  for (const auto& [pattern, b] : timing) out << "inference_time_s,\"" << pattern << "\"," << b.mean_s << ',' << b.repeats << ",0\n";
  return out.str();
}

std::optional<double> EvalReport::value(const std::string& metric, const std::string& pattern) const {
  const auto m = metrics.find(metric);
  if (m == metrics.end()) return std::nullopt;
  const auto c = m->second.find(pattern);
  if (c == m->second.end() || c->second.frames == 0) return std::nullopt;
  return c->second.mean();
}

EvalReport eval_matrix(const UnicModel& model, const LoadedDataset& data, const EvalOptions& opt) {
  EvalReport report;
  report.variant = to_string(model.config().variant);
  const auto frames = data.frames(Split::Valid, opt.labels, opt.frame_stride);
  if (frames.empty()) throw_data_error("validation split is empty");

  std::size_t n_all = 0, n_single = 0, n_none = 0;
  for (const auto& f : frames) {
    n_all += f.all_contact;
    n_single += f.single_contact;
    n_none += f.no_contact;
  }
  if (!n_all) report.notices.push_back("all-contact subset is empty; skipped");
  if (!n_single) report.notices.push_back("single-contact subset is empty; skipped");
  if (!n_none) report.notices.push_back("no-contact subset is empty; skipped");
  if (model.config().variant == Variant::Visual) {
    report.notices.push_back("visual model never sees wrench or tactile; only All and Rotation differ");
  }

  for (const auto& pattern : removal_patterns()) {
    report.patterns.push_back(pattern.label);
    const auto s = evaluate_frames(model, frames, pattern.presence, opt);
    if (n_all) report.metrics[kAllContactMetric][pattern.label] = s.all_contact;
    if (n_single) report.metrics[kSingleContactMetric][pattern.label] = s.single_contact;
    if (n_none) report.metrics[kNoContactMetric][pattern.label] = s.no_contact;
    if (opt.timing_repeats > 0) {
      report.timing[pattern.label] =
          bench_inference(model, *frames.front().frame, pattern.presence, opt.timing_repeats, opt.timing_warmup);
    }
  }
  return report;
}

BenchStats bench_inference(const UnicModel& model, const FrameSample& frame, const ModalityPresence& presence,
                           int repeats, int warmup) {
  if (repeats < 1) throw_usage_error("repeats must be at least 1");
  for (int i = 0; i < warmup; ++i) (void)predict_frame(frame, presence, model);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto map = predict_frame(frame, presence, model);
    const auto t1 = std::chrono::steady_clock::now();
    if (map.empty()) throw_numeric_error("empty prediction");
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  BenchStats b;
  b.repeats = repeats;
  for (double t : times) b.mean_s += t;
  b.mean_s /= repeats;
  for (double t : times) b.stddev_s += (t - b.mean_s) * (t - b.mean_s);
  b.stddev_s = std::sqrt(b.stddev_s / repeats);
  return b;
}

void write_ply(const PointCloud& cloud, const AffordanceMap& affordance, const std::filesystem::path& path) {
  if (cloud.size() != affordance.size()) throw_data_error("affordance length does not match cloud");
  std::ofstream out(path);
  if (!out) throw_data_error("cannot open '" + path.string() + "' for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty float affordance\nend_header\n";
  out.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud[i].x() << ' ' << cloud[i].y() << ' ' << cloud[i].z() << ' ' << affordance[i] << '\n';
  }
}

}  // namespace unic
