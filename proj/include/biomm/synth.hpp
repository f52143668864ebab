#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "biomm/rng.hpp"
#include "biomm/signal.hpp"

namespace biomm {

/// Which label dimension each synthetic modality carries.
struct PlantedMap {
  bool ecg_arousal = true;    // heart rate = 55 + 5 * arousal bpm
  bool eda_arousal = true;    // phasic burst rate proportional to arousal
  bool face_valence = true;   // mean intensity
  bool face_emotion = true;   // gradient orientation
};

/// Long recordings with a planted affect drift, written under `therapy/`.
struct TherapySpec {
  std::size_t patients = 0;
  double minutes = 32.0;
  double sample_rate_hz = 800.0;
  double frame_interval_s = 10.0;
  double start_valence = 2.0, start_arousal = 8.0;
  double end_valence = 8.0, end_arousal = 2.0;
  /// Fractions of the session over which the label moves from start to end.
  double ramp_begin = 0.4, ramp_end = 0.6;
};

struct SynthSpec {
  std::size_t n_subjects = 4;
  std::size_t trials_per_subject = 8;
  double trial_seconds = 30.0;
  std::uint64_t rng_seed = 1;
  PlantedMap planted;
  double noise_sigma = 0.02;
  double sample_rate_hz = 128.0;
  double frame_rate_hz = 1.0;
  std::size_t face_size = 64;
  std::size_t canvas_size = 80;
  double label_mean = 5.0;
  double label_sigma = 1.5;
  double face_noise_sigma = 0.02;
  TherapySpec therapy;

  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

/// Label trajectory over a session: `start` until `ramp_begin`, linear to
/// `end` at `ramp_end`, then `end`. Positions are fractions of the session.
struct LabelPath {
  AffectLabel start;
  AffectLabel end;
  double ramp_begin = 0.0;
  double ramp_end = 1.0;

  static LabelPath constant(const AffectLabel& l) { return {l, l, 0.0, 1.0}; }
  AffectLabel at(double fraction) const;
};

double heart_rate_bpm(double arousal);

SignalTrace gen_ecg(const LabelPath& path, double seconds, double hz, std::uint64_t seed, double noise_sigma = 0.0,
                    bool encode_arousal = true);
inline SignalTrace gen_ecg(const AffectLabel& label, double seconds, double hz, std::uint64_t seed,
                           double noise_sigma = 0.0) {
  return gen_ecg(LabelPath::constant(label), seconds, hz, seed, noise_sigma);
}

struct EdaOptions {
  double burst_rate_per_arousal = 0.02;  // bursts per second per arousal unit
  double fixed_burst_rate = 0.1;         // used when arousal is not encoded
  bool encode_arousal = true;
  double drift_per_s = 0.002;
};

struct EdaTrace {
  SignalTrace trace;
  std::vector<double> burst_onsets_s;
};

EdaTrace gen_eda_detailed(const LabelPath& path, double seconds, double hz, std::uint64_t seed,
                          double noise_sigma = 0.0, const EdaOptions& options = {});
inline SignalTrace gen_eda(const AffectLabel& label, double seconds, double hz, std::uint64_t seed,
                           double noise_sigma = 0.0) {
  return gen_eda_detailed(LabelPath::constant(label), seconds, hz, seed, noise_sigma).trace;
}

struct FaceOptions {
  std::size_t size = 64;
  bool encode_valence = true;
  bool encode_emotion = true;
  double noise_sigma = 0.02;
};

/// Procedural face stand-in: mean intensity follows valence, an oriented
/// gradient at angle 2*pi*k/7 marks emotion class k.
Image gen_face(const AffectLabel& label, std::uint64_t seed, const FaceOptions& options = {});

AffectLabel draw_label(Rng& rng, const SynthSpec& spec);

/// In-memory corpus, sessions ordered by id.
std::vector<SessionData> gen_sessions(const SynthSpec& spec);
std::vector<SessionData> gen_therapy_sessions(const SynthSpec& spec);
SessionData gen_therapy_session(const SynthSpec& spec, std::size_t patient, const LabelPath& path);

/// Writes labels.jsonl, one directory per session, spec.json, and
/// therapy/<patient>/ when therapy sessions are requested.
void gen_dataset(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace biomm
