#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "test_util.hpp"
#include "unic/metrics.hpp"
#include "unic/training.hpp"

using namespace unic;

namespace {

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  auto side = [](const PointCloud& x, const PointCloud& y) {
    double s = 0;
    for (const auto& p : x) {
      double best = INFINITY;
      for (const auto& q : y) best = std::min(best, (p - q).norm());
      s += best;
    }
    return s / x.size();
  };
  return 0.5 * (side(a, b) + side(b, a));
}

ModelConfig tiny_model(Variant v = Variant::Unic) {
  ModelConfig c;
  c.variant = v;
  c.token_dim = 8;
  c.tokens = 2;
  c.point_widths = {8, 8};
  c.mlp_hidden = 8;
  c.head_hidden = 8;
  c.tactile_depth = 1;
  c.trunk_depth = 1;
  c.points = 48;
  c.seed = 2;
  return c;
}

LoadedDataset tiny_data(std::uint64_t seed = 4) {
  auto eps = generate_dataset(default_recipe(10, 2, 48), seed);
  std::vector<EpisodeMeta> metas;
  for (const auto& e : eps) metas.push_back(EpisodeMeta::of(e));
  return LoadedDataset::from_episodes(std::move(eps), partition_validation(split_dataset(metas, 0.5, seed)));
}

}  // namespace

TEST(Metrics, PerfectPredictionScoresZero) {
  const PointCloud cloud{{0, 0, 0}, {0.01, 0, 0}, {0.2, 0, 0}};
  const AffordanceMap pred{1.0, 0.5, -1.0};
  EXPECT_EQ(metric_all_contact(pred, cloud, {{0, 0, 0}, {0.01, 0, 0}}), 0.0);
  EXPECT_NEAR(metric_single_contact(pred, cloud, {0.005, 0, 0}), 0.0, 1e-12);
  EXPECT_EQ(metric_no_contact(AffordanceMap(5, -1.0)), 0.0);
  EXPECT_EQ(metric_no_contact(AffordanceMap(5, 0.0)), 1.0);
}

TEST(Metrics, EmptyPredictionIsPenalizedWithDiagonal) {
  const PointCloud cloud{{0, 0, 0}, {0.03, 0.04, 0}, {0.01, 0, 0}};
  const AffordanceMap none(3, -0.5);
  bool empty = false;
  EXPECT_NEAR(metric_all_contact(none, cloud, {{0, 0, 0}}, &empty), 50.0, 1e-9);
  EXPECT_TRUE(empty);
  empty = false;
  EXPECT_NEAR(metric_single_contact(none, cloud, {0, 0, 0}, &empty), 50.0, 1e-9);
  EXPECT_TRUE(empty);
  EXPECT_EQ(test::error_kind_of([&] { metric_all_contact(none, cloud, {}); }), ErrorKind::Data);
  EXPECT_EQ(test::error_kind_of([] { metric_no_contact({}); }), ErrorKind::Data);
}

TEST(Metrics, SymmetricStraddleHitsSingleContact) {
  const PointCloud cloud{{-0.01, 0, 0}, {0.01, 0, 0}, {0.3, 0.3, 0}};
  EXPECT_NEAR(metric_single_contact({0.3, 0.3, -1.0}, cloud, {0, 0, 0}), 0.0, 1e-12);
  EXPECT_NEAR(metric_single_contact({-1.0, 0.3, -1.0}, cloud, {0, 0, 0}), 10.0, 1e-9);
}

TEST(Metrics, AllContactMatchesBruteForceChamfer) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cloud = test::random_cloud(rng, 40);
    const auto gt = test::random_cloud(rng, 7);
    AffordanceMap pred(cloud.size());
    for (auto& v : pred) v = u(rng);
    pred[3] = 0.9;
    PointCloud patch;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (pred[i] > 0) patch.push_back(cloud[i]);
    }
    const double want = brute_chamfer(patch, gt) * 1000.0;
    EXPECT_NEAR(metric_all_contact(pred, cloud, gt), want, 1e-12 * want);
  }
}

TEST(MetricCell, Means) {
  MetricCell c;
  EXPECT_EQ(c.mean(), 0.0);
  c.add(1.0);
  c.add(3.0, true);
  EXPECT_EQ(c.mean(), 2.0);
  EXPECT_EQ(c.empty_rate(), 0.5);
}

TEST(EvalReport, MatrixShapeAndSchema) {
  const auto data = tiny_data();
  const UnicModel model(tiny_model());
  const auto r = eval_matrix(model, data);
  ASSERT_EQ(r.patterns.size(), 5u);
  EXPECT_EQ(r.patterns.front(), "All");
  for (const auto* m : {kAllContactMetric, kSingleContactMetric, kNoContactMetric}) {
    if (!r.metrics.count(m)) continue;
    EXPECT_EQ(r.metrics.at(m).size(), 5u) << m;
  }
  const auto j = r.to_json();
  EXPECT_EQ(j.at("variant"), "unic");
  EXPECT_EQ(j.at("patterns").size(), 5u);
  for (const auto& [metric, row] : j.at("metrics").items()) {
    for (const auto& [pattern, cell] : row.items()) {
      EXPECT_TRUE(cell.contains("value") && cell.contains("frames") && cell.contains("empty_patch_rate")) << metric;
    }
  }
  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "metric,pattern,value,frames,empty_patch_rate");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(5 * r.metrics.size()));
}

TEST(EvalReport, AllPatternEqualsDirectEvaluation) {
  const auto data = tiny_data();
  const UnicModel model(tiny_model());
  const auto r = eval_matrix(model, data);
  const auto s = evaluate_frames(model, data.frames(Split::Valid, {}), ModalityPresence::all());
  if (s.all_contact.frames) EXPECT_EQ(*r.value(kAllContactMetric, "All"), s.all_contact.mean());
  if (s.no_contact.frames) EXPECT_EQ(*r.value(kNoContactMetric, "All"), s.no_contact.mean());
  EXPECT_FALSE(r.value("nonexistent", "All").has_value());
}

TEST(EvalReport, DeterministicAcrossRunsAndWorkers) {
  const auto data = tiny_data();
  const UnicModel model(tiny_model());
  EvalOptions two;
  two.workers = 2;
  const auto a = eval_matrix(model, data).to_json(false);
  EXPECT_EQ(a, eval_matrix(model, data).to_json(false));
  EXPECT_EQ(a, eval_matrix(model, data, two).to_json(false));
}

TEST(EvalReport, VisualNotice) {
  const auto data = tiny_data();
  const auto r = eval_matrix(UnicModel(tiny_model(Variant::Visual)), data);
  EXPECT_FALSE(r.notices.empty());
  EXPECT_EQ(*r.value(kNoContactMetric, "All"), *r.value(kNoContactMetric, "FT & Tac"));
}

TEST(Bench, ReportsPositiveTimes) {
  const auto data = tiny_data();
  const UnicModel model(tiny_model());
  const auto b = bench_inference(model, data.episodes.front().frames.front(), ModalityPresence::all(), 5, 1);
  EXPECT_EQ(b.repeats, 5);
  EXPECT_GT(b.mean_s, 0.0);
  EXPECT_EQ(test::error_kind_of([&] { bench_inference(model, data.episodes.front().frames.front(), {}, 0); }),
            ErrorKind::Usage);
}

TEST(Ply, AsciiLayout) {
  const auto path = std::filesystem::temp_directory_path() / "unic_test.ply";
  write_ply({{0.5, 0.25, 1.0}, {0, 0, 0}}, {0.75, -1.0}, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(),
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
            "property float affordance\nend_header\n0.5 0.25 1 0.75\n0 0 0 -1\n");
  std::filesystem::remove(path);
  EXPECT_EQ(test::error_kind_of([&] { write_ply({{0, 0, 0}}, {}, path); }), ErrorKind::Data);
}
