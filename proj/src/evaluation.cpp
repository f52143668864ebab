#include "biomm/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <map>

#include "biomm/error.hpp"
#include "biomm/session_io.hpp"

namespace biomm {

using nlohmann::json;

bool binarize_affect(double value) { return value > 5.0; }

namespace {

template <typename It>
std::size_t argmax(It first, It last) {
  std::size_t best = 0;
  for (It it = first; it != last; ++it)
    if (*it > *(first + static_cast<std::ptrdiff_t>(best))) best = static_cast<std::size_t>(it - first);
  return best;
}

std::size_t predicted_emotion(const AffectEstimate& e) { return argmax(e.begin() + 3, e.end()); }

}  // namespace

PrecisionReport precision(std::span<const AffectEstimate> predictions, std::span<const AffectLabel> labels) {
  if (predictions.size() != labels.size())
    throw UsageError("precision: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw UsageError("precision: no predictions");
  std::array<std::size_t, kTargetCount> tp{}, fp{};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& l = labels[i];
    const double truth[3] = {l.valence, l.arousal, l.liking};
    for (std::size_t d = 0; d < 3; ++d) {
      if (!binarize_affect(p[d])) continue;
      (binarize_affect(truth[d]) ? tp : fp)[d]++;
    }
    const std::size_t k = predicted_emotion(p);
    (k == l.emotion_class() ? tp : fp)[3 + k]++;
  }
  PrecisionReport r;
  r.samples = predictions.size();
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    if (tp[t] + fp[t] == 0) continue;
    r.precision[t] = 100.0 * static_cast<double>(tp[t]) / static_cast<double>(tp[t] + fp[t]);
    sum += *r.precision[t];
    ++defined;
  }
  if (defined) r.average = sum / static_cast<double>(defined);
  return r;
}

std::vector<AffectEstimate> predict_all(AffectModel& model, const std::vector<SyncedSample>& samples) {
  std::vector<AffectEstimate> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(model, s));
  return out;
}

Evaluation evaluate(AffectModel& model, const std::vector<SyncedSample>& samples, bool per_frame) {
  if (samples.empty()) throw UsageError("evaluate: no samples");
  for (const auto& s : samples)
    if (!s.labeled) throw UsageError("evaluate: session " + s.session_id + " has no label");
  const auto estimates = predict_all(model, samples);
  Evaluation ev;
  if (per_frame) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      ev.items.push_back({samples[i].subject_id, samples[i].session_id, samples[i].frame_index, estimates[i],
                          samples[i].label});
  } else {
    std::map<std::string, std::size_t> slot;
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto [it, fresh] = slot.try_emplace(samples[i].session_id, ev.items.size());
      if (fresh) {
        ev.items.push_back({samples[i].subject_id, samples[i].session_id, -1, {}, samples[i].label});
        counts.push_back(0);
      }
      auto& acc = ev.items[it->second].estimate;
      for (std::size_t t = 0; t < kTargetCount; ++t) acc[t] += estimates[i][t];
      counts[it->second]++;
    }
    for (std::size_t j = 0; j < ev.items.size(); ++j)
      for (auto& v : ev.items[j].estimate) v /= static_cast<double>(counts[j]);
  }
  std::vector<AffectEstimate> preds;
  std::vector<AffectLabel> labels;
  for (const auto& item : ev.items) {
    preds.push_back(item.estimate);
    labels.push_back(item.label);
  }
  ev.report = precision(preds, labels);
  return ev;
}

std::string_view quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::HVHA: return "HVHA";
    case Quadrant::LVHA: return "LVHA";
    case Quadrant::LVLA: return "LVLA";
    case Quadrant::HVLA: return "HVLA";
  }
  return "LVLA";
}

int quadrant_number(Quadrant q) {
  switch (q) {
    case Quadrant::HVHA: return 1;
    case Quadrant::LVHA: return 2;
    case Quadrant::LVLA: return 3;
    case Quadrant::HVLA: return 4;
  }
  return 3;
}

QuadrantPoint to_quadrant(double valence, double arousal) {
  QuadrantPoint p;
  p.valence_scaled = (valence - 5.0) / 4.0;
  p.arousal_scaled = (arousal - 5.0) / 4.0;
  const bool hv = p.valence_scaled > 0.0;
  const bool ha = p.arousal_scaled > 0.0;
  p.quadrant = hv ? (ha ? Quadrant::HVHA : Quadrant::HVLA) : (ha ? Quadrant::LVHA : Quadrant::LVLA);
  return p;
}

PatientAssessment assess_session(AffectModel& model, const SessionData& session, double window_minutes,
                                 std::vector<std::string>* warnings, const PipelineOptions& options) {
  if (!(window_minutes > 0.0)) throw ConfigError("assessment window must be positive");
  if (session.traces.empty()) throw IngestError("session '" + session.session_id + "' has no bio traces");
  double t0 = session.traces.front().start_time_s;
  double t1 = t0;
  for (const auto& tr : session.traces) {
    t0 = std::min(t0, tr.start_time_s);
    t1 = std::max(t1, tr.start_time_s + tr.duration_s());
  }
  PatientAssessment a;
  a.patient = session.subject_id;
  a.window_s = window_minutes * 60.0;
  if (t1 - t0 < 2.0 * a.window_s) {
    a.clipped = true;
    a.window_s = (t1 - t0) / 2.0;
    if (warnings)
      warnings->push_back("session '" + session.session_id + "' lasts " + format_double((t1 - t0) / 60.0) +
                          " min, shorter than two " + format_double(window_minutes) +
                          " min windows; using halves");
  }
  auto sync = synchronize(session, options);
  if (warnings) warnings->insert(warnings->end(), sync.warnings.begin(), sync.warnings.end());
  double pre[2] = {0, 0}, post[2] = {0, 0};
  for (const auto& s : sync.samples) {
    const bool in_pre = s.timestamp_s < t0 + a.window_s;
    const bool in_post = s.timestamp_s >= t1 - a.window_s;
    if (!in_pre && !in_post) continue;
    const auto e = predict(model, s);
    if (in_pre) {
      pre[0] += e[0];
      pre[1] += e[1];
      ++a.pre_frames;
    }
    if (in_post) {
      post[0] += e[0];
      post[1] += e[1];
      ++a.post_frames;
    }
  }
  if (a.pre_frames == 0 || a.post_frames == 0)
    throw IngestError("session '" + session.session_id + "' has no frames in the " +
                      (a.pre_frames == 0 ? "first" : "last") + " window");
  const double np = static_cast<double>(a.pre_frames), nq = static_cast<double>(a.post_frames);
  a.pre = to_quadrant(pre[0] / np, pre[1] / np);
  a.post = to_quadrant(post[0] / nq, post[1] / nq);
  a.movement_valence = a.post.valence_scaled - a.pre.valence_scaled;
  a.movement_arousal = a.post.arousal_scaled - a.pre.arousal_scaled;
  a.movement = std::hypot(a.movement_valence, a.movement_arousal);
  return a;
}

TherapyReport therapy_assess(AffectModel& model, const std::vector<SessionData>& sessions, double window_minutes,
                             const PipelineOptions& options) {
  TherapyReport r;
  for (const auto& s : sessions) {
    r.patients.push_back(assess_session(model, s, window_minutes, &r.warnings, options));
    const auto& a = r.patients.back();
    if (a.pre.quadrant == Quadrant::LVHA && a.post.quadrant == Quadrant::HVLA) ++r.q2_to_q4;
  }
  return r;
}

AblationReport ablation_run(const std::vector<SyncedSample>& samples, const TrainConfig& config, bool parallel) {
  const DataSplit split = split_samples(samples, config.split);
  if (split.eval.empty()) throw ConfigError("ablation: split leaves no evaluation data");
  AblationReport report;
  report.train_subjects = split.train_subjects;
  report.eval_subjects = split.eval_subjects;
  const std::pair<const char*, StreamMask> arms[] = {
      {"bio-only", {true, false}}, {"face-only", {false, true}}, {"multi-modal", {true, true}}};
  auto run_arm = [&](const char* name, StreamMask mask) {
    TrainConfig c = config;
    c.model.variant = FusionVariant::BMMN;
    c.model.streams = mask;
    auto trained = train(split.train, c);
    AblationArm arm;
    arm.name = name;
    arm.streams = mask;
    arm.metrics = std::move(trained.metrics);
    arm.evaluation = evaluate(trained.model, split.eval, config.per_frame_scoring);
    return arm;
  };
  if (parallel) {
    std::vector<std::future<AblationArm>> jobs;
    for (const auto& [name, mask] : arms) jobs.push_back(std::async(std::launch::async, run_arm, name, mask));
    for (auto& j : jobs) report.arms.push_back(j.get());
  } else {
    for (const auto& [name, mask] : arms) report.arms.push_back(run_arm(name, mask));
  }
  return report;
}

json to_json(const PrecisionReport& r) {
  json per = json::object();
  for (std::size_t t = 0; t < kTargetCount; ++t)
    per[std::string(kTargetNames[t])] = r.precision[t] ? json(*r.precision[t]) : json(nullptr);
  return {{"precision", per}, {"average", r.average ? json(*r.average) : json(nullptr)}, {"samples", r.samples}};
}

namespace {

json point_json(const QuadrantPoint& p) {
  return {{"valence_scaled", p.valence_scaled},
          {"arousal_scaled", p.arousal_scaled},
          {"quadrant", quadrant_name(p.quadrant)}};
}

}  // namespace

json to_json(const TherapyReport& r) {
  json patients = json::array();
  for (const auto& a : r.patients)
    patients.push_back({{"patient", a.patient},
                        {"pre", point_json(a.pre)},
                        {"post", point_json(a.post)},
                        {"movement", {{"valence", a.movement_valence}, {"arousal", a.movement_arousal}, {"magnitude", a.movement}}},
                        {"window_s", a.window_s},
                        {"clipped", a.clipped},
                        {"pre_frames", a.pre_frames},
                        {"post_frames", a.post_frames}});
  return {{"patients", patients}, {"q2_to_q4", r.q2_to_q4}, {"warnings", r.warnings}};
}

json to_json(const AblationReport& r) {
  json arms = json::array();
  for (const auto& a : r.arms)
    arms.push_back({{"arm", a.name},
                    {"streams", {{"bio", a.streams.bio}, {"spatial", a.streams.spatial}}},
                    {"report", to_json(a.evaluation.report)}});
  return {{"arms", arms}, {"train_subjects", r.train_subjects}, {"eval_subjects", r.eval_subjects}};
}

void write_precision_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, PrecisionReport>>& rows) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "name";
  for (auto n : kTargetNames) os << ',' << n;
  os << ",average,samples\n";
  for (const auto& [name, r] : rows) {
    os << name;
    for (const auto& p : r.precision) os << ',' << (p ? format_double(*p) : "");
    os << ',' << (r.average ? format_double(*r.average) : "") << ',' << r.samples << '\n';
  }
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<ScoredItem>& items) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "subject,session,frame_index";
  for (auto n : kTargetNames) os << ",pred_" << n;
  os << ",label_valence,label_arousal,label_liking,label_emotion\n";
  for (const auto& it : items) {
    os << it.subject_id << ',' << it.session_id << ',' << it.frame_index;
    for (double v : it.estimate) os << ',' << format_double(v);
    os << ',' << format_double(it.label.valence) << ',' << format_double(it.label.arousal) << ','
       << format_double(it.label.liking) << ',' << kEmotionNames[it.label.emotion_class()] << '\n';
  }
}

void write_quadrant_csv(const std::filesystem::path& path, const TherapyReport& report) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "patient,phase,valence_scaled,arousal_scaled,quadrant\n";
  for (const auto& a : report.patients) {
    for (const auto& [phase, p] : {std::pair{"pre", a.pre}, std::pair{"post", a.post}})
      os << a.patient << ',' << phase << ',' << format_double(p.valence_scaled) << ','
         << format_double(p.arousal_scaled) << ',' << quadrant_name(p.quadrant) << '\n';
  }
}

}  // namespace biomm
