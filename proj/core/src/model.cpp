#include "unic/model.hpp"

#include "unic/binary_format.hpp"
#include "unic/error.hpp"
#include "unic/random.hpp"

namespace unic {

FrameInputs make_inputs(const FrameSample& frame, const ModelConfig& cfg) {
  FrameInputs in;
  in.cloud = cloud_matrix(frame.cloud);
  in.rotation = rotation_input(frame.rotation);
  in.wrench = wrench_input(frame.wrench, cfg);
  in.tactile_left = tactile_matrix(frame.tactile_left);
  in.tactile_right = tactile_matrix(frame.tactile_right);
  return in;
}

UnicModel::UnicModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(derive_seed(cfg_.seed, {0x6d6f64656cULL}));
  tactile_ = TactileEncoder::create(params_, cfg_, rng);
  rotation_ = VectorEncoder::create(params_, "rotation", 4, cfg_, rng);
  wrench_ = VectorEncoder::create(params_, "wrench", 6, cfg_, rng);
  points_ = PointEncoder::create(params_, cfg_, rng);
  trunk_ = FusionTrunk::create(params_, cfg_, rng);
  if (cfg_.variant == Variant::E2E) {
    regression_ = RegressionHead::create(params_, cfg_, rng);
  } else {
    head_ = AffordanceHead::create(params_, cfg_, rng);
  }
}

ModalityPresence UnicModel::effective_presence(const ModalityPresence& requested) const {
  ModalityPresence p = requested;
  if (cfg_.variant == Variant::Visual) {
    p.wrench = false;
    p.tactile = false;
  }
  if (!p.any()) throw_usage_error("no modality left for a " + to_string(cfg_.variant) + " model");
  return p;
}

std::array<std::optional<Var>, kModalityCount> UnicModel::encode(ad::Tape& t, const FrameInputs& in,
                                                                 const ModalityPresence& presence) const {
  std::array<std::optional<Var>, kModalityCount> out;
  if (presence.pointcloud) {
    const Var cloud = t.constant(in.cloud);
    out[0] = points_(t, cloud, points_.center(t, cloud));
  }
  if (presence.rotation) out[1] = rotation_(t, t.constant(in.rotation));
  if (presence.wrench) out[2] = wrench_(t, t.constant(in.wrench));
  if (presence.tactile) out[3] = tactile_(t, t.constant(in.tactile_left), t.constant(in.tactile_right));
  return out;
}

MaskedTokens UnicModel::fuse(ad::Tape& t, const std::array<std::optional<Var>, kModalityCount>& tokens,
                             const ModalityPresence& presence, double mask_ratio, std::uint64_t mask_seed) const {
  const Var mask = t.parameter(trunk_.mask_token());
  const Var filler = cfg_.substitutes_mask_token() ? mask : t.constant(Matrix::Zero(1, cfg_.token_dim));
  const Var sequence = substitute_missing(t, tokens, presence, filler, cfg_.tokens);
  if (mask_ratio <= 0.0) return {sequence, {}};
  return apply_training_mask(sequence, mask_ratio, mask, mask_seed);
}

ForwardResult UnicModel::forward(ad::Tape& t, const FrameInputs& in, const ForwardOptions& opt) const {
  const ModalityPresence presence = effective_presence(opt.presence);
  ForwardResult r;
  auto fused = fuse(t, encode(t, in, presence), presence, opt.mask_ratio, opt.mask_seed);
  r.sequence = fused.tokens;
  r.masked_rows = std::move(fused.masked_rows);
  r.global = trunk_(t, r.sequence);

  const Var cloud = t.constant(in.cloud);
  r.center = points_.center(t, cloud);
  if (regression_) {
    r.output = ad::add_row((*regression_)(t, r.global), ad::scale(r.center, cfg_.coord_scale));
  } else {
    const Var query = opt.query ? t.constant(*opt.query) : cloud;
    r.logit = head_.logits(t, r.global, points_.normalize(t, query, r.center));
    r.output = ad::tanh(r.logit);
  }
  return r;
}

AffordanceMap UnicModel::predict_affordance(const FrameSample& frame, const ModalityPresence& presence) const {
  if (regression_) {
    // Regressed points are turned back into a map with the labeling kernel.
    return generate_affordance(frame.cloud, ContactAnnotation{predict_points(frame, presence)}, LabelGenParams{});
  }
  ad::Tape t(params_, false);
  ForwardOptions opt;
  opt.presence = presence;
  const auto r = forward(t, make_inputs(frame, cfg_), opt);
  const Matrix& v = r.output.value();
  if (!v.allFinite()) throw_numeric_error("non-finite affordance prediction");
  return AffordanceMap(v.data(), v.data() + v.size());
}

PointCloud UnicModel::predict_points(const FrameSample& frame, const ModalityPresence& presence) const {
  if (!regression_) throw_usage_error("point regression needs an e2e model");
  ad::Tape t(params_, false);
  ForwardOptions opt;
  opt.presence = presence;
  const auto r = forward(t, make_inputs(frame, cfg_), opt);
  const Matrix& v = r.output.value();
  if (!v.allFinite()) throw_numeric_error("non-finite point prediction");
  PointCloud out;
  for (Eigen::Index i = 0; i < v.rows(); ++i) out.push_back(v.row(i).transpose() / cfg_.coord_scale);
  return out;
}

// ---- spec-level wrappers ----------------------------------------------------

namespace {

TokenMatrix single(Modality m, const Var& v) {
  if (!v.value().allFinite()) throw_numeric_error("non-finite " + to_string(m) + " tokens");
  return {m, v.value()};
}

}  // namespace

TokenMatrix encode_tactile(const UnicModel& model, const TactileMap& left, const TactileMap& right) {
  ad::Tape t(model.params(), false);
  return single(Modality::Tactile, model.tactile_encoder()(t, t.constant(tactile_matrix(left)),
                                                           t.constant(tactile_matrix(right))));
}

TokenMatrix encode_rotation(const UnicModel& model, const Quaternion& q) {
  ad::Tape t(model.params(), false);
  return single(Modality::Rotation, model.rotation_encoder()(t, t.constant(rotation_input(q))));
}

TokenMatrix encode_wrench(const UnicModel& model, const Wrench& w) {
  ad::Tape t(model.params(), false);
  return single(Modality::Wrench, model.wrench_encoder()(t, t.constant(wrench_input(w, model.config()))));
}

TokenMatrix encode_pointcloud(const UnicModel& model, const PointCloud& cloud) {
  ad::Tape t(model.params(), false);
  const Var c = t.constant(cloud_matrix(cloud));
  const auto& enc = model.point_encoder();
  return single(Modality::PointCloud, enc(t, c, enc.center(t, c)));
}

Matrix trunk_forward(const UnicModel& model, const Matrix& sequence) {
  ad::Tape t(model.params(), false);
  return model.trunk()(t, t.constant(sequence)).value();
}

AffordanceMap head_forward(const UnicModel& model, const Matrix& global, const PointCloud& sample_points,
                           const Point3& center) {
  if (model.regresses_points()) throw_usage_error("e2e models have no affordance head");
  if (sample_points.empty()) throw_data_error("head needs at least one sample point");
  ad::Tape t(model.params(), false);
  const Var c = t.constant(Matrix(center.transpose()));
  const Var coords = model.point_encoder().normalize(t, t.constant(cloud_matrix(sample_points)), c);
  const Matrix& v = model.head()(t, t.constant(global), coords).value();
  return AffordanceMap(v.data(), v.data() + v.size());
}

AffordanceMap predict_frame(const FrameSample& frame, const ModalityPresence& presence, const UnicModel& model) {
  return model.predict_affordance(frame, presence);
}

// ---- checkpoints ------------------------------------------------------------

namespace {

std::size_t checkpoint_floats(const nlohmann::json& header) {
  if (header.value("kind", std::string()) != "checkpoint") throw_data_error("not a UNIC checkpoint file");
  std::size_t n = 0;
  for (const auto& t : header.at("tensors")) {
    n += t.at("shape").at(0).get<std::size_t>() * t.at("shape").at(1).get<std::size_t>();
  }
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const UnicModel& model, TensorPrecision precision) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<double> data;
  data.reserve(model.params().scalar_count());
  for (const auto& p : model.params()) {
    tensors.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
    data.insert(data.end(), p.value.data(), p.value.data() + p.value.size());
  }
  const nlohmann::json header = {{"kind", "checkpoint"}, {"config", model.config().to_json()}, {"tensors", tensors}};
  if (precision == TensorPrecision::F64) return encode_container(header, std::span<const double>(data));
  const std::vector<float> narrow(data.begin(), data.end());
  return encode_container(header, std::span<const float>(narrow));
}

UnicModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Container c = decode_container(bytes, "checkpoint", &checkpoint_floats);
  std::optional<UnicModel> model;
  try {
    model.emplace(ModelConfig::from_json(c.header.at("config")));
  } catch (const Error& e) {
    throw_data_error(std::string("checkpoint config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw_data_error(std::string("malformed checkpoint header: ") + e.what());
  }
  auto& ps = model->params();
  const auto& tensors = c.header.at("tensors");
  if (tensors.size() != ps.size()) throw_data_error("checkpoint tensor count does not match its config");
  std::size_t at = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& desc = tensors[i];
    auto& p = ps[i];
    if (desc.at("name").get<std::string>() != p.name) {
      throw_data_error("checkpoint tensor '" + desc.at("name").get<std::string>() + "' where '" + p.name + "' expected");
    }
    if (desc.at("shape").at(0).get<Eigen::Index>() != p.value.rows() ||
        desc.at("shape").at(1).get<Eigen::Index>() != p.value.cols()) {
      throw_data_error("checkpoint tensor '" + p.name + "' has the wrong shape");
    }
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = c.tensors[at++];
    if (!p.value.allFinite()) throw_data_error("checkpoint tensor '" + p.name + "' is not finite");
  }
  return std::move(*model);
}

void save_checkpoint(const UnicModel& model, const std::filesystem::path& path, TensorPrecision precision) {
  write_file_bytes(path, encode_checkpoint(model, precision));
}

UnicModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace unic
