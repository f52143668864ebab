#include "biomm/bmmn.hpp"

#include <fstream>

#include "biomm/error.hpp"
#include "biomm/ops.hpp"
#include "json_checks.hpp"

namespace biomm {

using nlohmann::json;

std::vector<std::size_t> BioNetConfig::chain() const {
  std::vector<std::size_t> out;
  std::size_t len = segment_length;
  for (std::size_t i = 0; i < 4; ++i) {
    if (len < kernels[i]) throw ConfigError("bio net: block " + std::to_string(i + 1) + " kernel longer than input");
    len = len - kernels[i] + 1;
    out.push_back(len);
    if (len < pool_window) throw ConfigError("bio net: block " + std::to_string(i + 1) + " too short to pool");
    len = (len - pool_window) / pool_stride + 1;
    out.push_back(len);
  }
  return out;
}

std::size_t BioNetConfig::channel_width() const {
  const auto c = chain();
  std::size_t w = 0;
  for (std::size_t i = 0; i < 4; ++i) w += filters[i] * c[2 * i + 1];
  return w;
}

std::size_t SpatialConfig::flattened_width() const {
  std::size_t side = image_size;
  for (std::size_t i = 0; i < filters.size(); ++i) {
    if (side < kernel) throw ConfigError("spatial net: image too small for block " + std::to_string(i + 1));
    side = side - kernel + 1;
    if (side < 2) throw ConfigError("spatial net: block " + std::to_string(i + 1) + " too small to pool");
    side = (side - 2) / 2 + 1;
  }
  return (filters.empty() ? 1 : filters.back()) * side * side;
}

std::size_t SpatialConfig::feature_width() const {
  return mode == SpatialMode::Cnn ? out_features : passthrough_width;
}

std::string_view variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::BMMN: return "bmmn";
    case FusionVariant::BMMN_BAE_1: return "bae1";
    case FusionVariant::BMMN_BAE_2: return "bae2";
  }
  return "bmmn";
}

FusionVariant parse_variant(std::string_view name) {
  if (name == "bmmn") return FusionVariant::BMMN;
  if (name == "bae1") return FusionVariant::BMMN_BAE_1;
  if (name == "bae2") return FusionVariant::BMMN_BAE_2;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected bmmn, bae1, bae2)");
}

std::vector<std::pair<std::string, std::size_t>> ModelConfig::stream_widths() const {
  std::vector<std::pair<std::string, std::size_t>> out;
  if (uses_bio()) out.emplace_back("bio", bio.feature_width());
  if (uses_bae()) out.emplace_back("latent", 2 * bae.latent);
  if (uses_spatial()) out.emplace_back("spatial", spatial.feature_width());
  return out;
}

std::size_t ModelConfig::head_input_width() const {
  std::size_t w = 0;
  for (const auto& [_, width] : stream_widths()) w += width;
  return w;
}

void ModelConfig::validate() const {
  bio.chain();
  bae.validate();
  if (uses_spatial() && spatial.mode == SpatialMode::Cnn) spatial.flattened_width();
  if (uses_spatial() && spatial.feature_width() == 0) throw ConfigError("spatial stream has zero width");
  if (head_input_width() == 0) throw ConfigError("model has no active feature stream");
  if (bio.segment_length != bae.segment_length && uses_bae() && uses_bio())
    throw ConfigError("bio net and auto-encoder disagree on segment length");
}

json to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"streams", {{"bio", c.streams.bio}, {"spatial", c.streams.spatial}}},
          {"bio",
           {{"segment_length", c.bio.segment_length},
            {"kernels", c.bio.kernels},
            {"filters", c.bio.filters},
            {"pool_window", c.bio.pool_window},
            {"pool_stride", c.bio.pool_stride}}},
          {"bae", to_json(c.bae)},
          {"spatial",
           {{"mode", c.spatial.mode == SpatialMode::Cnn ? "cnn" : "passthrough"},
            {"image_size", c.spatial.image_size},
            {"filters", c.spatial.filters},
            {"kernel", c.spatial.kernel},
            {"out_features", c.spatial.out_features},
            {"passthrough_width", c.spatial.passthrough_width}}}};
}

ModelConfig model_config_from_json(const json& j) {
  detail::reject_negative_integers(j, "model config");
  ModelConfig c;
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("streams")) {
      c.streams.bio = j.at("streams").value("bio", true);
      c.streams.spatial = j.at("streams").value("spatial", true);
    }
    if (j.contains("bio")) {
      const json& b = j.at("bio");
      c.bio.segment_length = b.value("segment_length", c.bio.segment_length);
      if (b.contains("kernels")) c.bio.kernels = b.at("kernels").get<std::array<std::size_t, 4>>();
      if (b.contains("filters")) c.bio.filters = b.at("filters").get<std::array<std::size_t, 4>>();
      c.bio.pool_window = b.value("pool_window", c.bio.pool_window);
      c.bio.pool_stride = b.value("pool_stride", c.bio.pool_stride);
    }
    if (j.contains("bae")) c.bae = bae_config_from_json(j.at("bae"));
    if (j.contains("spatial")) {
      const json& s = j.at("spatial");
      const std::string mode = s.value("mode", std::string("cnn"));
      if (mode != "cnn" && mode != "passthrough") throw ConfigError("spatial mode must be cnn or passthrough");
      c.spatial.mode = mode == "cnn" ? SpatialMode::Cnn : SpatialMode::Passthrough;
      c.spatial.image_size = s.value("image_size", c.spatial.image_size);
      if (s.contains("filters")) c.spatial.filters = s.at("filters").get<std::vector<std::size_t>>();
      c.spatial.kernel = s.value("kernel", c.spatial.kernel);
      c.spatial.out_features = s.value("out_features", c.spatial.out_features);
      c.spatial.passthrough_width = s.value("passthrough_width", c.spatial.passthrough_width);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

AffectEstimate to_estimate(std::span<const double> scaled) {
  if (scaled.size() != kTargetCount) throw DimensionError("estimate needs 10 outputs");
  AffectEstimate e{};
  for (std::size_t i = 0; i < kTargetCount; ++i) e[i] = i < 3 ? 1.0 + 8.0 * scaled[i] : scaled[i];
  return e;
}

std::string bio_prefix(Channel c) { return c == Channel::ECG ? "bio.ecg" : "bio.eda"; }

AffectModel::AffectModel(ModelConfig cfg, std::uint64_t seed) : config(std::move(cfg)), params(seed) {
  config.validate();
  register_params();
}

void AffectModel::register_params() {
  if (config.uses_bio()) {
    for (Channel ch : kChannels) {
      std::size_t in = 1;
      for (std::size_t i = 0; i < 4; ++i) {
        const std::string name = bio_prefix(ch) + ".conv" + std::to_string(i + 1);
        params.add(name + ".w", {config.bio.filters[i], in, config.bio.kernels[i]});
        params.add(name + ".b", {config.bio.filters[i]}, InitKind::Zero);
        in = config.bio.filters[i];
      }
    }
  }
  if (config.uses_bae())
    for (Channel ch : kChannels) BaeModel(bae_prefix(ch), config.bae).register_params(params);
  if (config.uses_spatial() && config.spatial.mode == SpatialMode::Cnn) {
    std::size_t in = 1;
    for (std::size_t i = 0; i < config.spatial.filters.size(); ++i) {
      const std::string name = "spatial.conv" + std::to_string(i + 1);
      const std::size_t k = config.spatial.kernel;
      params.add(name + ".w", {config.spatial.filters[i], in, k, k});
      params.add(name + ".b", {config.spatial.filters[i]}, InitKind::Zero);
      in = config.spatial.filters[i];
    }
    params.add("spatial.fc.w", {config.spatial.out_features, config.spatial.flattened_width()});
    params.add("spatial.fc.b", {config.spatial.out_features}, InitKind::Zero);
  }
  params.add("head.fc.w", {kTargetCount, config.head_input_width()});
  params.add("head.fc.b", {kTargetCount}, InitKind::Zero);
}

Var bio_channel_forward(Graph& g, ParamStore& store, const BioNetConfig& cfg, const std::string& prefix, Var segment) {
  if (segment.shape() != Shape{1, cfg.segment_length})
    throw DimensionError("bio net: expected segment [1x" + std::to_string(cfg.segment_length) + "], got " +
                         shape_string(segment.shape()));
  std::vector<Var> merged;
  Var x = segment;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i + 1);
    x = relu(add_channel_bias(conv1d_valid(x, g.param(store, name + ".w")), g.param(store, name + ".b")));
    x = maxpool1d(x, cfg.pool_window, cfg.pool_stride).out;
    merged.push_back(flatten(x));
  }
  return concat(merged);
}

Var bio_forward(Graph& g, ParamStore& store, const BioNetConfig& cfg, std::span<const Var> segments) {
  if (segments.size() != 2) throw UsageError("bio net: expected ECG and EDA segments, got " + std::to_string(segments.size()));
  Var parts[] = {bio_channel_forward(g, store, cfg, bio_prefix(Channel::ECG), segments[0]),
                 bio_channel_forward(g, store, cfg, bio_prefix(Channel::EDA), segments[1])};
  return concat(parts);
}

Var spatial_forward(Graph& g, ParamStore& store, const SpatialConfig& cfg, const FacePayload& face) {
  if (cfg.mode == SpatialMode::Passthrough) {
    const auto* features = std::get_if<std::vector<double>>(&face);
    if (!features) throw DimensionError("spatial passthrough: frame carries an image, not a feature vector");
    if (cfg.passthrough_width != 0 && features->size() != cfg.passthrough_width)
      throw DimensionError("spatial passthrough: expected " + std::to_string(cfg.passthrough_width) +
                           " features, got " + std::to_string(features->size()));
    return g.constant(Tensor::vector(*features));
  }
  const auto* img = std::get_if<Image>(&face);
  if (!img) throw DimensionError("spatial cnn: frame carries features, not an image");
  if (img->height != cfg.image_size || img->width != cfg.image_size)
    throw DimensionError("spatial cnn: expected " + std::to_string(cfg.image_size) + "x" +
                         std::to_string(cfg.image_size) + " image, got " + std::to_string(img->height) + "x" +
                         std::to_string(img->width));
  Var x = g.constant(Tensor({1, img->height, img->width}, img->pixels));
  for (std::size_t i = 0; i < cfg.filters.size(); ++i) {
    const std::string name = "spatial.conv" + std::to_string(i + 1);
    x = relu(add_channel_bias(conv2d_valid(x, g.param(store, name + ".w")), g.param(store, name + ".b")));
    x = maxpool2d(x, 2, 2).out;
  }
  return linear(flatten(x), g.param(store, "spatial.fc.w"), g.param(store, "spatial.fc.b"));
}

Var head_forward(Graph& g, ParamStore& store, std::span<const Var> streams, std::size_t expected_width) {
  if (streams.empty()) throw UsageError("head: no feature streams");
  std::size_t width = 0;
  for (const Var& s : streams) width += s.size();
  if (width != expected_width)
    throw DimensionError("head: merge width expected " + std::to_string(expected_width) + ", got " +
                         std::to_string(width));
  std::vector<Var> flat;
  for (const Var& s : streams) flat.push_back(s.shape().size() == 1 ? s : flatten(s));
  Var merged = relu(concat(flat));
  return linear(merged, g.param(store, "head.fc.w"), g.param(store, "head.fc.b"));
}

ForwardOutput forward(Graph& g, AffectModel& model, const SyncedSample& sample) {
  const ModelConfig& cfg = model.config;
  ForwardOutput out;
  std::vector<Var> segments;
  for (Channel ch : kChannels) {
    const auto& w = sample.segment(ch).window;
    segments.push_back(g.constant(Tensor({1, w.size()}, w)));
  }
  if (cfg.uses_bio()) out.streams.push_back(bio_forward(g, model.params, cfg.bio, segments));
  if (cfg.uses_bae()) {
    std::vector<Var> latents;
    for (std::size_t c = 0; c < 2; ++c) {
      const std::string prefix = bae_prefix(kChannels[c]);
      if (!model.params.contains(prefix + ".enc.fc.w"))
        throw ConfigError("variant " + std::string(variant_name(cfg.variant)) + " requires auto-encoder weights");
      BaeModel bae(prefix, cfg.bae);
      auto enc = bae.encode(g, model.params, segments[c]);
      latents.push_back(enc.z);
      out.originals.push_back(segments[c]);
      out.reconstructions.push_back(bae.decode(g, model.params, enc.z, enc));
    }
    out.streams.push_back(concat(latents));
  }
  if (cfg.uses_spatial()) out.streams.push_back(spatial_forward(g, model.params, cfg.spatial, sample.face));
  out.output = head_forward(g, model.params, out.streams, cfg.head_input_width());
  return out;
}

void LossWeights::validate() const {
  if (bmmn < 0.0 || bae < 0.0) throw ConfigError("loss weights must be non-negative");
  if (bmmn == 0.0 && bae == 0.0) throw ConfigError("loss weights must not both be zero");
}

LossBreakdown total_loss(Graph& g, const ForwardOutput& out, const AffectLabel& label, const LossWeights& weights) {
  weights.validate();
  const auto targets = label.scaled_targets();
  Var target = g.constant(Tensor::vector({targets.begin(), targets.end()}));
  LossBreakdown result;
  Var l_bmmn = mse_loss(out.output, target);
  result.bmmn = l_bmmn.value().item();
  Var total = scale(l_bmmn, weights.bmmn);
  if (!out.reconstructions.empty()) {
    if (out.reconstructions.size() != out.originals.size()) throw UsageError("total_loss: reconstruction/original mismatch");
    Var l_bae = reconstruction_loss(out.originals[0], out.reconstructions[0]);
    for (std::size_t c = 1; c < out.reconstructions.size(); ++c)
      l_bae = add(l_bae, reconstruction_loss(out.originals[c], out.reconstructions[c]));
    l_bae = scale(l_bae, 1.0 / static_cast<double>(out.reconstructions.size()));
    result.bae = l_bae.value().item();
    total = add(total, scale(l_bae, weights.bae));
  }
  result.total = total;
  return result;
}

AffectEstimate predict(AffectModel& model, const SyncedSample& sample) {
  Graph g;
  return to_estimate(forward(g, model, sample).output.value().values());
}

void save_model(const std::filesystem::path& dir, const AffectModel& model) {
  std::filesystem::create_directories(dir);
  json j = {{"format", "biomm-model"}, {"config", to_json(model.config)}, {"info", model.info}};
  std::ofstream(dir / "model.json") << j.dump(2) << '\n';
  save_checkpoint(dir / "params.ckpt", model.params);
}

AffectModel load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw IngestError("no model.json in " + dir.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw IngestError(dir.string() + "/model.json: " + e.what());
  }
  AffectModel m;
  m.config = model_config_from_json(j.at("config"));
  m.info = j.value("info", json::object());
  m.params = load_checkpoint(dir / "params.ckpt");
  return m;
}

}  // namespace biomm
