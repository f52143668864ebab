#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "biomm/bae.hpp"
#include "biomm/bmmn.hpp"

namespace biomm {

struct SplitSpec {
  /// Explicit evaluation subjects; when empty the last `n_holdout` subjects
  /// (sorted by id) are held out.
  std::vector<std::string> holdout_subjects;
  std::size_t n_holdout = 1;
  /// When false, the last session of every subject is held out instead.
  bool person_independent = true;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;        // BMMN alone
  std::size_t bae_epochs = 30;    // auto-encoder pretraining
  std::size_t joint_epochs = 10;  // fused variant under the weighted loss
  /// Upper bound on segments per channel used for auto-encoder pretraining.
  std::size_t bae_segments = 200;
  std::uint64_t seed = 1;
  LossWeights weights;
  SplitSpec split;
  bool per_frame_scoring = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct DataSplit {
  std::vector<SyncedSample> train;
  std::vector<SyncedSample> eval;
  std::vector<std::string> train_subjects;
  std::vector<std::string> eval_subjects;
};

std::vector<std::string> subjects_of(const std::vector<SyncedSample>& samples);
DataSplit split_samples(const std::vector<SyncedSample>& samples, const SplitSpec& spec);

struct EpochMetrics {
  std::string stage;  // "bmmn", "bae.ecg", "bae.eda", "joint"
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_bmmn = 0.0;
  double loss_bae = 0.0;
};

struct TrainResult {
  AffectModel model;
  std::vector<EpochMetrics> metrics;
};

/// Fills in widths that depend on the data (passthrough feature width).
ModelConfig resolve_model_config(ModelConfig cfg, const std::vector<SyncedSample>& samples);

/// Mean loss terms of `model` over `samples`, no parameter updates.
EpochMetrics evaluate_loss(AffectModel& model, const std::vector<SyncedSample>& samples, const LossWeights& weights);

/// Stage A trains the plain network; for fused variants stage B pretrains
/// one auto-encoder per channel (or copies `pretrained_bae`) and stage C
/// trains the fused graph jointly, starting from the stage A stream weights
/// and a fresh head.
TrainResult train(const std::vector<SyncedSample>& samples, const TrainConfig& config,
                  const ParamStore* pretrained_bae = nullptr);

/// Per-channel segments for auto-encoder pretraining, evenly subsampled to
/// at most `limit` windows.
std::vector<std::vector<double>> channel_segments(const std::vector<SyncedSample>& samples, Channel channel,
                                                  std::size_t limit = 0);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics);

}  // namespace biomm
