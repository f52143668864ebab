#pragma once

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biomm/bmmn.hpp"
#include "biomm/training.hpp"

namespace biomm {

/// High iff the rating is strictly above the scale midpoint 5.
bool binarize_affect(double value);

inline constexpr std::array<std::string_view, kTargetCount> kTargetNames = {
    "valence", "arousal", "liking", "neutral", "disgust", "joy", "surprise", "anger", "fear", "sadness"};

struct PrecisionReport {
  /// Percent; empty when the label was never predicted positive.
  std::array<std::optional<double>, kTargetCount> precision{};
  /// Mean of the defined entries; empty when none is defined.
  std::optional<double> average;
  std::size_t samples = 0;
};

/// Affect dims are binarized at 5; emotions are scored one-vs-rest after an
/// argmax over the seven outputs (and over the seven label entries).
PrecisionReport precision(std::span<const AffectEstimate> predictions, std::span<const AffectLabel> labels);

struct ScoredItem {
  std::string subject_id;
  std::string session_id;
  std::int64_t frame_index = -1;  // -1 for trial-level rows
  AffectEstimate estimate{};
  AffectLabel label;
};

struct Evaluation {
  PrecisionReport report;
  std::vector<ScoredItem> items;
};

/// Per-frame estimates of every sample, in input order.
std::vector<AffectEstimate> predict_all(AffectModel& model, const std::vector<SyncedSample>& samples);

/// Per-trial scoring averages the frame estimates of each session; per-frame
/// scoring uses every frame.
Evaluation evaluate(AffectModel& model, const std::vector<SyncedSample>& samples, bool per_frame = false);

enum class Quadrant { HVHA, LVHA, LVLA, HVLA };

std::string_view quadrant_name(Quadrant q);
/// Circumplex numbering: HVHA 1, LVHA 2, LVLA 3, HVLA 4.
int quadrant_number(Quadrant q);

struct QuadrantPoint {
  double valence_scaled = 0.0;
  double arousal_scaled = 0.0;
  Quadrant quadrant = Quadrant::LVLA;
};

/// Maps ratings on [1, 9] onto [-1, 1] via (x - 5) / 4. A zero coordinate
/// counts as low.
QuadrantPoint to_quadrant(double valence, double arousal);

struct PatientAssessment {
  std::string patient;
  QuadrantPoint pre;
  QuadrantPoint post;
  double movement_valence = 0.0;
  double movement_arousal = 0.0;
  double movement = 0.0;  // Euclidean, scaled units
  double window_s = 0.0;
  bool clipped = false;   // session shorter than two windows
  std::size_t pre_frames = 0;
  std::size_t post_frames = 0;
};

struct TherapyReport {
  std::vector<PatientAssessment> patients;
  std::size_t q2_to_q4 = 0;
  std::vector<std::string> warnings;
};

/// Averages the estimates of the frames in the first and last window of the
/// session. The session start and end are taken from its bio traces.
PatientAssessment assess_session(AffectModel& model, const SessionData& session, double window_minutes,
                                 std::vector<std::string>* warnings = nullptr, const PipelineOptions& options = {});
TherapyReport therapy_assess(AffectModel& model, const std::vector<SessionData>& sessions, double window_minutes = 15.0,
                             const PipelineOptions& options = {});

struct AblationArm {
  std::string name;
  StreamMask streams;
  Evaluation evaluation;
  std::vector<EpochMetrics> metrics;
};

struct AblationReport {
  std::vector<AblationArm> arms;  // bio-only, face-only, multi-modal
  std::vector<std::string> train_subjects;
  std::vector<std::string> eval_subjects;
};

/// Trains three plain networks that differ only in their active streams,
/// with identical seeds and splits. `parallel` runs the arms concurrently.
AblationReport ablation_run(const std::vector<SyncedSample>& samples, const TrainConfig& config, bool parallel = false);

nlohmann::json to_json(const PrecisionReport& r);
nlohmann::json to_json(const TherapyReport& r);
nlohmann::json to_json(const AblationReport& r);

void write_precision_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, PrecisionReport>>& rows);
void write_predictions_csv(const std::filesystem::path& path, const std::vector<ScoredItem>& items);
/// `patient,phase,valence_scaled,arousal_scaled,quadrant`
void write_quadrant_csv(const std::filesystem::path& path, const TherapyReport& report);

}  // namespace biomm
