#include "biomm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "biomm/error.hpp"
#include "biomm/session_io.hpp"
#include "json_checks.hpp"

namespace biomm {

using nlohmann::json;

void SynthSpec::validate() const {
  if (n_subjects == 0 || trials_per_subject == 0) throw ConfigError("synth: subject and trial counts must be positive");
  if (!(trial_seconds > 0.0)) throw ConfigError("synth: trial_seconds must be positive");
  if (!(noise_sigma >= 0.0) || !(face_noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
  if (sample_rate_hz != 128.0 && sample_rate_hz != 800.0) throw ConfigError("synth: sample_rate_hz must be 128 or 800");
  if (!(frame_rate_hz > 0.0)) throw ConfigError("synth: frame_rate_hz must be positive");
  if (face_size == 0 || canvas_size < face_size) throw ConfigError("synth: canvas must hold the face");
  if (!(label_sigma >= 0.0)) throw ConfigError("synth: label_sigma must be >= 0");
  if (therapy.patients > 0) {
    if (therapy.sample_rate_hz != 128.0 && therapy.sample_rate_hz != 800.0)
      throw ConfigError("synth: therapy sample rate must be 128 or 800");
    if (!(therapy.minutes > 0.0) || !(therapy.frame_interval_s > 0.0))
      throw ConfigError("synth: therapy minutes and frame interval must be positive");
    if (!(therapy.ramp_begin >= 0.0 && therapy.ramp_begin <= therapy.ramp_end && therapy.ramp_end <= 1.0))
      throw ConfigError("synth: therapy ramp must satisfy 0 <= begin <= end <= 1");
  }
}

SynthSpec synth_spec_from_json(const json& j) {
  detail::reject_negative_integers(j, "synth spec");
  SynthSpec s;
  try {
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.trials_per_subject = j.value("trials_per_subject", s.trials_per_subject);
    s.trial_seconds = j.value("trial_seconds", s.trial_seconds);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
    s.frame_rate_hz = j.value("frame_rate_hz", s.frame_rate_hz);
    s.face_size = j.value("face_size", s.face_size);
    s.canvas_size = j.value("canvas_size", s.canvas_size);
    s.label_mean = j.value("label_mean", s.label_mean);
    s.label_sigma = j.value("label_sigma", s.label_sigma);
    s.face_noise_sigma = j.value("face_noise_sigma", s.face_noise_sigma);
    if (j.contains("planted_map")) {
      const json& p = j.at("planted_map");
      s.planted.ecg_arousal = p.value("ecg_arousal", s.planted.ecg_arousal);
      s.planted.eda_arousal = p.value("eda_arousal", s.planted.eda_arousal);
      s.planted.face_valence = p.value("face_valence", s.planted.face_valence);
      s.planted.face_emotion = p.value("face_emotion", s.planted.face_emotion);
    }
    if (j.contains("therapy")) {
      const json& t = j.at("therapy");
      TherapySpec& th = s.therapy;
      th.patients = t.value("patients", th.patients);
      th.minutes = t.value("minutes", th.minutes);
      th.sample_rate_hz = t.value("sample_rate_hz", th.sample_rate_hz);
      th.frame_interval_s = t.value("frame_interval_s", th.frame_interval_s);
      th.start_valence = t.value("start_valence", th.start_valence);
      th.start_arousal = t.value("start_arousal", th.start_arousal);
      th.end_valence = t.value("end_valence", th.end_valence);
      th.end_arousal = t.value("end_arousal", th.end_arousal);
      th.ramp_begin = t.value("ramp_begin", th.ramp_begin);
      th.ramp_end = t.value("ramp_end", th.ramp_end);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const SynthSpec& s) {
  return {{"n_subjects", s.n_subjects},
          {"trials_per_subject", s.trials_per_subject},
          {"trial_seconds", s.trial_seconds},
          {"rng_seed", s.rng_seed},
          {"noise_sigma", s.noise_sigma},
          {"sample_rate_hz", s.sample_rate_hz},
          {"frame_rate_hz", s.frame_rate_hz},
          {"face_size", s.face_size},
          {"canvas_size", s.canvas_size},
          {"label_mean", s.label_mean},
          {"label_sigma", s.label_sigma},
          {"face_noise_sigma", s.face_noise_sigma},
          {"planted_map",
           {{"ecg_arousal", s.planted.ecg_arousal},
            {"eda_arousal", s.planted.eda_arousal},
            {"face_valence", s.planted.face_valence},
            {"face_emotion", s.planted.face_emotion}}},
          {"therapy",
           {{"patients", s.therapy.patients},
            {"minutes", s.therapy.minutes},
            {"sample_rate_hz", s.therapy.sample_rate_hz},
            {"frame_interval_s", s.therapy.frame_interval_s},
            {"start_valence", s.therapy.start_valence},
            {"start_arousal", s.therapy.start_arousal},
            {"end_valence", s.therapy.end_valence},
            {"end_arousal", s.therapy.end_arousal},
            {"ramp_begin", s.therapy.ramp_begin},
            {"ramp_end", s.therapy.ramp_end}}}};
}

AffectLabel LabelPath::at(double fraction) const {
  double w = 0.0;
  if (fraction >= ramp_end) {
    w = 1.0;
  } else if (fraction > ramp_begin) {
    w = (fraction - ramp_begin) / (ramp_end - ramp_begin);
  }
  if (w == 0.0) return start;
  if (w == 1.0) return end;
  AffectLabel l;
  l.valence = start.valence + w * (end.valence - start.valence);
  l.arousal = start.arousal + w * (end.arousal - start.arousal);
  l.liking = start.liking + w * (end.liking - start.liking);
  for (std::size_t i = 0; i < kEmotionCount; ++i) l.emotions[i] = start.emotions[i] + w * (end.emotions[i] - start.emotions[i]);
  return l;
}

double heart_rate_bpm(double arousal) { return 55.0 + 5.0 * arousal; }

namespace {

double gauss(double t, double center, double sigma) {
  const double d = (t - center) / sigma;
  return std::exp(-0.5 * d * d);
}

// Beat shape: P wave, QRS spike, T wave (seconds relative to the R peak).
double beat(double dt) {
  return 0.12 * gauss(dt, -0.16, 0.025) + 1.0 * gauss(dt, 0.0, 0.012) + 0.3 * gauss(dt, 0.25, 0.05);
}

}  // namespace

SignalTrace gen_ecg(const LabelPath& path, double seconds, double hz, std::uint64_t seed, double noise_sigma,
                    bool encode_arousal) {
  if (hz != 128.0 && hz != 800.0) throw ConfigError("gen_ecg: rate must be 128 or 800 Hz");
  const auto n = static_cast<std::size_t>(std::llround(seconds * hz));
  Rng rng(derive_seed(seed, hash_string("ecg")));
  auto rate_at = [&](double t) {
    return encode_arousal ? heart_rate_bpm(path.at(t / seconds).arousal) / 60.0 : heart_rate_bpm(5.0) / 60.0;
  };
  // Beat times by integrating the instantaneous rate from a random phase;
  // beats before t = 0 keep the first window's shape consistent.
  std::vector<double> beats;
  const double dt = 1.0 / hz;
  double phase = rng.uniform();
  for (double t = -1.0; t < seconds + 1.0; t += dt) {
    const double next = phase + rate_at(std::clamp(t, 0.0, seconds)) * dt;
    if (std::floor(next) > std::floor(phase)) beats.push_back(t + dt * (std::ceil(phase) - phase) / (next - phase));
    phase = next;
  }
  SignalTrace trace{Channel::ECG, hz, 0.0, std::vector<double>(n, 0.0)};
  std::size_t first = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / hz;
    while (first < beats.size() && beats[first] < t - 0.6) ++first;
    double v = 0.0;
    for (std::size_t b = first; b < beats.size() && beats[b] < t + 0.4; ++b) v += beat(t - beats[b]);
    trace.samples[i] = v;
  }
  if (noise_sigma > 0.0) {
    Rng noise(derive_seed(seed, hash_string("ecg-noise")));
    for (double& v : trace.samples) v += noise.normal(0.0, noise_sigma);
  }
  return trace;
}

EdaTrace gen_eda_detailed(const LabelPath& path, double seconds, double hz, std::uint64_t seed, double noise_sigma,
                          const EdaOptions& options) {
  if (hz != 128.0 && hz != 800.0) throw ConfigError("gen_eda: rate must be 128 or 800 Hz");
  const auto n = static_cast<std::size_t>(std::llround(seconds * hz));
  Rng rng(derive_seed(seed, hash_string("eda")));
  auto rate_at = [&](double t) {
    return options.encode_arousal ? options.burst_rate_per_arousal * path.at(t / seconds).arousal
                                  : options.fixed_burst_rate;
  };
  double max_rate = 0.0;
  if (options.encode_arousal) {
    max_rate = options.burst_rate_per_arousal * std::max(path.start.arousal, path.end.arousal);
  } else {
    max_rate = options.fixed_burst_rate;
  }

  EdaTrace out;
  out.trace = SignalTrace{Channel::EDA, hz, 0.0, std::vector<double>(n, 0.0)};
  if (max_rate > 0.0) {
    // Thinning of a homogeneous Poisson process at the peak rate.
    double t = rng.exponential(max_rate);
    while (t < seconds) {
      if (rng.uniform() * max_rate < rate_at(t)) out.burst_onsets_s.push_back(t);
      t += rng.exponential(max_rate);
    }
  }
  constexpr double rise = 0.75, decay = 4.0, amplitude = 0.3;
  // Peak of exp(-t/decay) - exp(-t/rise), used to normalize burst height.
  const double t_peak = std::log(decay / rise) * rise * decay / (decay - rise);
  const double peak = std::exp(-t_peak / decay) - std::exp(-t_peak / rise);
  std::size_t oldest = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / hz;
    const AffectLabel l = path.at(t / seconds);
    double v = 0.1 * l.valence + options.drift_per_s * t;
    while (oldest < out.burst_onsets_s.size() && t - out.burst_onsets_s[oldest] > 30.0) ++oldest;
    for (std::size_t b = oldest; b < out.burst_onsets_s.size() && out.burst_onsets_s[b] <= t; ++b) {
      const double s = t - out.burst_onsets_s[b];
      v += amplitude * (std::exp(-s / decay) - std::exp(-s / rise)) / peak;
    }
    out.trace.samples[i] = v;
  }
  if (noise_sigma > 0.0) {
    Rng noise(derive_seed(seed, hash_string("eda-noise")));
    for (double& v : out.trace.samples) v += noise.normal(0.0, noise_sigma);
  }
  return out;
}

Image gen_face(const AffectLabel& label, std::uint64_t seed, const FaceOptions& options) {
  const std::size_t s = options.size;
  Image img(s, s);
  const double base = options.encode_valence ? 0.06 + 0.88 * (label.valence - 1.0) / 8.0 : 0.5;
  const double theta = 2.0 * std::numbers::pi * static_cast<double>(label.emotion_class()) / kEmotionCount;
  const double amp = options.encode_emotion ? 0.05 : 0.0;
  const double half = static_cast<double>(s) / 2.0;
  Rng rng(derive_seed(seed, hash_string("face")));
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t c = 0; c < s; ++c) {
      const double x = (static_cast<double>(c) + 0.5 - half) / half;
      const double y = (static_cast<double>(r) + 0.5 - half) / half;
      double v = base + amp * (x * std::cos(theta) + y * std::sin(theta));
      if (options.noise_sigma > 0.0) v += rng.normal(0.0, options.noise_sigma);
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

AffectLabel draw_label(Rng& rng, const SynthSpec& spec) {
  auto clipped = [&](double mean) { return std::clamp(rng.normal(mean, spec.label_sigma), 1.0, 9.0); };
  AffectLabel l;
  l.valence = clipped(spec.label_mean);
  l.arousal = clipped(spec.label_mean);
  l.liking = std::clamp(l.valence + rng.normal(0.0, spec.label_sigma / 2.0), 1.0, 9.0);
  l.emotions[rng.below(kEmotionCount)] = 1.0;
  return l;
}

namespace {

std::string subject_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02zu", i + 1);
  return buf;
}

std::string trial_name(std::size_t subject, std::size_t trial) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu_t%02zu", subject + 1, trial + 1);
  return buf;
}

// Face pasted in the middle of a larger canvas, with landmarks whose box,
// once grown by the 20% crop margin, is exactly the face square.
FrameRecord make_frame(const Image& face, std::size_t canvas, std::int64_t index, double t) {
  FrameRecord f;
  f.frame_index = index;
  f.timestamp_s = t;
  Image img(canvas, canvas, 0.5);
  const std::size_t off = (canvas - face.width) / 2;
  for (std::size_t r = 0; r < face.height; ++r)
    for (std::size_t c = 0; c < face.width; ++c) img.at(off + r, off + c) = face.at(r, c);
  const double side = static_cast<double>(face.width);
  const double inner = side / 1.2;
  const double x0 = static_cast<double>(off) + (side - inner) / 2.0, x1 = x0 + inner;
  const double mid = (x0 + x1) / 2.0;
  f.landmarks = {{x0, x0},          {x1, x0},          {x0, x1},
                 {x1, x1},          {mid - inner / 5, mid - inner / 6}, {mid + inner / 5, mid - inner / 6},
                 {mid, mid},        {mid, mid + inner / 4}};
  f.payload = std::move(img);
  return f;
}

SessionData make_session(const SynthSpec& spec, const std::string& subject, const std::string& session,
                         const LabelPath& path, double seconds, double hz, double frame_interval, std::uint64_t seed,
                         bool labeled) {
  SessionData s;
  s.subject_id = subject;
  s.session_id = session;
  s.traces.push_back(gen_ecg(path, seconds, hz, derive_seed(seed, 1), spec.noise_sigma, spec.planted.ecg_arousal));
  EdaOptions eda;
  eda.encode_arousal = spec.planted.eda_arousal;
  s.traces.push_back(gen_eda_detailed(path, seconds, hz, derive_seed(seed, 2), spec.noise_sigma, eda).trace);
  FaceOptions face{spec.face_size, spec.planted.face_valence, spec.planted.face_emotion, spec.face_noise_sigma};
  const auto frames = static_cast<std::size_t>(std::floor(seconds / frame_interval));
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = (static_cast<double>(i) + 0.5) * frame_interval;
    const Image img = gen_face(path.at(t / seconds), derive_seed(seed, 3, i), face);
    s.frames.push_back(make_frame(img, spec.canvas_size, static_cast<std::int64_t>(i), t));
  }
  if (labeled) s.label = path.start;
  return s;
}

}  // namespace

std::vector<SessionData> gen_sessions(const SynthSpec& spec) {
  spec.validate();
  std::vector<SessionData> out;
  for (std::size_t subj = 0; subj < spec.n_subjects; ++subj)
    for (std::size_t trial = 0; trial < spec.trials_per_subject; ++trial) {
      const std::uint64_t seed = derive_seed(spec.rng_seed, subj, trial);
      Rng label_rng(derive_seed(seed, hash_string("label")));
      const AffectLabel label = draw_label(label_rng, spec);
      out.push_back(make_session(spec, subject_name(subj), trial_name(subj, trial), LabelPath::constant(label),
                                 spec.trial_seconds, spec.sample_rate_hz, 1.0 / spec.frame_rate_hz, seed, true));
    }
  return out;
}

SessionData gen_therapy_session(const SynthSpec& spec, std::size_t patient, const LabelPath& path) {
  char name[16];
  std::snprintf(name, sizeof name, "p%02zu", patient + 1);
  const std::uint64_t seed = derive_seed(spec.rng_seed, hash_string("therapy"), patient);
  return make_session(spec, name, name, path, spec.therapy.minutes * 60.0, spec.therapy.sample_rate_hz,
                      spec.therapy.frame_interval_s, seed, false);
}

std::vector<SessionData> gen_therapy_sessions(const SynthSpec& spec) {
  spec.validate();
  const TherapySpec& t = spec.therapy;
  std::vector<SessionData> out;
  for (std::size_t p = 0; p < t.patients; ++p) {
    Rng rng(derive_seed(spec.rng_seed, hash_string("therapy-label"), p));
    const std::size_t emotion = rng.below(kEmotionCount);
    LabelPath path{one_hot_label(t.start_valence, t.start_arousal, t.start_valence, emotion),
                   one_hot_label(t.end_valence, t.end_arousal, t.end_valence, emotion), t.ramp_begin, t.ramp_end};
    out.push_back(gen_therapy_session(spec, p, path));
  }
  return out;
}

void gen_dataset(const SynthSpec& spec, const std::filesystem::path& out) {
  const auto sessions = gen_sessions(spec);
  std::filesystem::create_directories(out);
  std::vector<LabelRecord> labels;
  for (const SessionData& s : sessions) {
    write_session(out / s.session_id, s);
    labels.push_back({s.subject_id, s.session_id, *s.label});
  }
  write_labels(out / "labels.jsonl", labels);
  std::ofstream(out / "spec.json") << to_json(spec).dump(2) << '\n';
  for (const SessionData& s : gen_therapy_sessions(spec)) write_session(out / "therapy" / s.session_id, s);
}

}  // namespace biomm
