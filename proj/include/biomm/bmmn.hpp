#pragma once

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "biomm/bae.hpp"
#include "biomm/graph.hpp"
#include "biomm/signal.hpp"

namespace biomm {

/// Per-channel 1D CNN: four conv(valid) + ReLU + maxpool blocks whose pooled
/// outputs are all flattened and concatenated (dense skip aggregation).
struct BioNetConfig {
  std::size_t segment_length = kSegmentLength;
  std::array<std::size_t, 4> kernels = {200, 100, 50, 25};
  std::array<std::size_t, 4> filters = {4, 2, 2, 2};
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  /// Lengths after each conv and each pool, interleaved.
  std::vector<std::size_t> chain() const;
  std::size_t channel_width() const;
  std::size_t feature_width() const { return 2 * channel_width(); }
};

enum class SpatialMode { Cnn, Passthrough };

/// Small 2D CNN stand-in for the face backbone, or passthrough of
/// precomputed per-frame features.
struct SpatialConfig {
  SpatialMode mode = SpatialMode::Cnn;
  std::size_t image_size = 64;
  std::vector<std::size_t> filters = {8, 16, 32};
  std::size_t kernel = 3;
  std::size_t out_features = 256;
  std::size_t passthrough_width = 0;

  std::size_t flattened_width() const;
  std::size_t feature_width() const;
};

enum class FusionVariant { BMMN, BMMN_BAE_1, BMMN_BAE_2 };

std::string_view variant_name(FusionVariant v);
FusionVariant parse_variant(std::string_view name);

/// Which modality streams feed the head (used by the ablation arms).
struct StreamMask {
  bool bio = true;
  bool spatial = true;
  friend bool operator==(const StreamMask&, const StreamMask&) = default;
};

struct ModelConfig {
  FusionVariant variant = FusionVariant::BMMN;
  StreamMask streams;
  BioNetConfig bio;
  BaeConfig bae;
  SpatialConfig spatial;

  bool uses_bio() const { return streams.bio && variant != FusionVariant::BMMN_BAE_1; }
  bool uses_bae() const { return variant != FusionVariant::BMMN; }
  bool uses_spatial() const { return streams.spatial; }
  /// Active streams in merge order with their widths.
  std::vector<std::pair<std::string, std::size_t>> stream_widths() const;
  std::size_t head_input_width() const;
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Ten outputs on the natural label scales: valence, arousal, liking on
/// [1, 9] (nominally), then seven emotion scores.
using AffectEstimate = std::array<double, kTargetCount>;

AffectEstimate to_estimate(std::span<const double> scaled_output);

struct AffectModel {
  ModelConfig config;
  ParamStore params;
  nlohmann::json info = nlohmann::json::object();  // provenance saved next to the weights

  AffectModel() = default;
  AffectModel(ModelConfig cfg, std::uint64_t seed);
  /// Registers every parameter the configuration needs.
  void register_params();
};

std::string bio_prefix(Channel c);

/// One channel's merged feature vector.
Var bio_channel_forward(Graph& g, ParamStore& store, const BioNetConfig& cfg, const std::string& prefix, Var segment);
/// Both channels (ECG then EDA), concatenated.
Var bio_forward(Graph& g, ParamStore& store, const BioNetConfig& cfg, std::span<const Var> segments);
Var spatial_forward(Graph& g, ParamStore& store, const SpatialConfig& cfg, const FacePayload& face);
/// Concatenate streams, ReLU, FC to ten outputs.
Var head_forward(Graph& g, ParamStore& store, std::span<const Var> streams, std::size_t expected_width);

struct ForwardOutput {
  Var output;  // [10], scaled targets
  std::vector<Var> originals;
  std::vector<Var> reconstructions;
  std::vector<Var> streams;
};

ForwardOutput forward(Graph& g, AffectModel& model, const SyncedSample& sample);

struct LossWeights {
  double bmmn = 1.0;
  double bae = 1.0;
  void validate() const;
};

struct LossBreakdown {
  Var total;
  double bmmn = 0.0;
  double bae = 0.0;
};

/// lambda_bmmn * mse(output, scaled label) + lambda_bae * mean per-channel
/// reconstruction mse (0 without reconstructions).
LossBreakdown total_loss(Graph& g, const ForwardOutput& out, const AffectLabel& label, const LossWeights& weights);

AffectEstimate predict(AffectModel& model, const SyncedSample& sample);

/// `<dir>/model.json` (config + info) and `<dir>/params.ckpt`.
void save_model(const std::filesystem::path& dir, const AffectModel& model);
AffectModel load_model(const std::filesystem::path& dir);

}  // namespace biomm
