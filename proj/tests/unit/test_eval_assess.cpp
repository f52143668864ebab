#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "biomm/error.hpp"
#include "biomm/evaluation.hpp"
#include "biomm/gradcheck_suite.hpp"
#include "biomm/rng.hpp"
#include "biomm/synth.hpp"

using namespace biomm;

namespace {

AffectEstimate estimate(double v, double a, double l, std::size_t emotion) {
  AffectEstimate e{};
  e[0] = v;
  e[1] = a;
  e[2] = l;
  e[3 + emotion] = 1.0;
  return e;
}

// Independent count: build the full 2x2 (or one-vs-rest) table per label.
std::array<std::optional<double>, kTargetCount> confusion_oracle(const std::vector<AffectEstimate>& p,
                                                                 const std::vector<AffectLabel>& l) {
  std::array<std::optional<double>, kTargetCount> out{};
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    std::size_t table[2][2] = {{0, 0}, {0, 0}};  // [predicted][actual]
    for (std::size_t i = 0; i < p.size(); ++i) {
      bool pred, actual;
      if (t < 3) {
        const double truth = t == 0 ? l[i].valence : t == 1 ? l[i].arousal : l[i].liking;
        pred = p[i][t] > 5.0;
        actual = truth > 5.0;
      } else {
        std::size_t best = 3;
        for (std::size_t k = 3; k < kTargetCount; ++k)
          if (p[i][k] > p[i][best]) best = k;
        pred = best == t;
        actual = l[i].emotions[t - 3] == 1.0;
      }
      table[pred][actual]++;
    }
    const std::size_t predicted = table[1][0] + table[1][1];
    if (predicted) out[t] = 100.0 * static_cast<double>(table[1][1]) / static_cast<double>(predicted);
  }
  return out;
}

}  // namespace

TEST_CASE("binarization threshold") {
  CHECK(binarize_affect(9.0));
  CHECK_FALSE(binarize_affect(1.0));
  CHECK_FALSE(binarize_affect(5.0));
  CHECK(binarize_affect(5.0001));
}

TEST_CASE("precision hand counts") {
  const std::vector<AffectEstimate> p = {estimate(8, 2, 2, 0), estimate(7, 2, 2, 0)};
  const std::vector<AffectLabel> l = {one_hot_label(8, 2, 2, 0), one_hot_label(3, 2, 2, 1)};
  const auto r = precision(p, l);
  CHECK(*r.precision[0] == 50.0);
  CHECK_FALSE(r.precision[1].has_value());
  CHECK_FALSE(r.precision[2].has_value());
  CHECK(*r.precision[3] == 50.0);
  CHECK_FALSE(r.precision[4].has_value());
  CHECK(*r.average == 50.0);
  CHECK(r.samples == 2);
  CHECK_THROWS_AS(precision(p, std::vector<AffectLabel>{l[0]}), UsageError);
  CHECK_THROWS_AS(precision({}, {}), UsageError);
}

TEST_CASE("perfect predictions score 100 everywhere they are defined") {
  std::vector<AffectEstimate> p;
  std::vector<AffectLabel> l;
  for (std::size_t i = 0; i < 14; ++i) {
    const double v = i % 2 ? 8.0 : 2.0;
    p.push_back(estimate(v, 10 - v, v, i % 7));
    l.push_back(one_hot_label(v, 10 - v, v, i % 7));
  }
  const auto r = precision(p, l);
  for (const auto& x : r.precision) CHECK(*x == 100.0);
  CHECK(*r.average == 100.0);
}

TEST_CASE("precision matches a confusion-matrix oracle on random cases") {
  Rng rng(21);
  for (int round = 0; round < 20; ++round) {
    std::vector<AffectEstimate> p(100);
    std::vector<AffectLabel> l;
    for (auto& e : p)
      for (auto& v : e) v = rng.uniform(0.0, 10.0);
    for (int i = 0; i < 100; ++i)
      l.push_back(one_hot_label(rng.uniform(1, 9), rng.uniform(1, 9), rng.uniform(1, 9), rng.below(7)));
    const auto r = precision(p, l);
    const auto o = confusion_oracle(p, l);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < kTargetCount; ++t) {
      CHECK(r.precision[t].has_value() == o[t].has_value());
      if (o[t]) {
        CHECK(*r.precision[t] == *o[t]);
        sum += *o[t];
        ++n;
      }
    }
    CHECK(*r.average == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-14));
  }
}

TEST_CASE("quadrant mapping") {
  auto q = to_quadrant(5, 5);
  CHECK(q.valence_scaled == 0.0);
  CHECK(q.arousal_scaled == 0.0);
  CHECK(q.quadrant == Quadrant::LVLA);
  q = to_quadrant(9, 1);
  CHECK(q.valence_scaled == 1.0);
  CHECK(q.arousal_scaled == -1.0);
  CHECK(q.quadrant == Quadrant::HVLA);
  q = to_quadrant(2, 8);
  CHECK(q.valence_scaled == -0.75);
  CHECK(q.arousal_scaled == 0.75);
  CHECK(q.quadrant == Quadrant::LVHA);
  CHECK(to_quadrant(9, 9).quadrant == Quadrant::HVHA);
  CHECK(to_quadrant(1, 1).valence_scaled == -1.0);
  CHECK(to_quadrant(5, 6).quadrant == Quadrant::LVHA);
  CHECK(to_quadrant(6, 5).quadrant == Quadrant::HVLA);
  CHECK(quadrant_number(Quadrant::LVHA) == 2);
  CHECK(quadrant_number(Quadrant::HVLA) == 4);
  double prev = -2.0;
  for (double v = 1.0; v <= 9.0; v += 0.25) {
    const double s = to_quadrant(v, 5).valence_scaled;
    CHECK(s > prev);
    prev = s;
  }
}

namespace {

struct ToyCorpus {
  ModelConfig config = toy_model_config(FusionVariant::BMMN);
  std::vector<SyncedSample> samples;
  ToyCorpus() {
    for (std::size_t subj = 0; subj < 2; ++subj)
      for (std::size_t trial = 0; trial < 2; ++trial)
        for (std::size_t f = 0; f < 3; ++f) {
          SyncedSample s = toy_sample(config, 100 * subj + 10 * trial + f);
          s.subject_id = "s0" + std::to_string(subj + 1);
          s.session_id = s.subject_id + "_t0" + std::to_string(trial + 1);
          s.frame_index = static_cast<std::int64_t>(f);
          s.label = one_hot_label(2 + 5 * trial, 7 - 5 * trial, 5, trial);
          samples.push_back(s);
        }
  }
};

}  // namespace

TEST_CASE("per-trial scoring averages frame estimates") {
  ToyCorpus c;
  AffectModel m(c.config, 2);
  const auto frames = evaluate(m, c.samples, true);
  const auto trials = evaluate(m, c.samples, false);
  CHECK(frames.items.size() == 12);
  CHECK(frames.report.samples == 12);
  REQUIRE(trials.items.size() == 4);
  CHECK(trials.items[1].session_id == "s01_t02");
  CHECK(trials.items[1].frame_index == -1);
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    const double mean = (frames.items[3].estimate[t] + frames.items[4].estimate[t] + frames.items[5].estimate[t]) / 3;
    CHECK(trials.items[1].estimate[t] == doctest::Approx(mean).epsilon(1e-14));
  }
  auto unlabeled = c.samples;
  unlabeled[0].labeled = false;
  CHECK_THROWS_AS(evaluate(m, unlabeled), UsageError);
}

TEST_CASE("ablation arms share split and sample counts") {
  ToyCorpus c;
  TrainConfig cfg;
  cfg.model = c.config;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  const auto r = ablation_run(c.samples, cfg);
  REQUIRE(r.arms.size() == 3);
  CHECK(r.arms[0].name == "bio-only");
  CHECK(r.arms[0].streams == StreamMask{true, false});
  CHECK(r.arms[1].streams == StreamMask{false, true});
  CHECK(r.arms[2].streams == StreamMask{true, true});
  for (const auto& a : r.arms) {
    CHECK(a.evaluation.report.samples == 2);
    CHECK(a.metrics.size() == 2);
  }
  CHECK(r.eval_subjects == std::vector<std::string>{"s02"});
  const auto again = ablation_run(c.samples, cfg, true);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(again.arms[i].evaluation.items[0].estimate == r.arms[i].evaluation.items[0].estimate);
}

TEST_CASE("therapy windows are disjoint, clipped when short") {
  SynthSpec spec;
  spec.therapy.minutes = 4;
  spec.therapy.frame_interval_s = 10;
  const auto session = gen_therapy_session(spec, 0, LabelPath::constant(one_hot_label(5, 5, 5, 0)));
  ModelConfig cfg = toy_model_config(FusionVariant::BMMN);
  cfg.spatial.image_size = 64;
  AffectModel m(cfg, 3);
  PipelineOptions opts;
  opts.segment.length = 64;
  std::vector<std::string> warnings;
  const auto a = assess_session(m, session, 1.0, &warnings, opts);
  CHECK_FALSE(a.clipped);
  CHECK(a.window_s == 60.0);
  CHECK(a.pre_frames == 6);
  CHECK(a.post_frames == 6);
  CHECK(warnings.empty());
  CHECK(std::abs(a.pre.valence_scaled - a.post.valence_scaled) < 0.05);
  CHECK(std::abs(a.pre.arousal_scaled - a.post.arousal_scaled) < 0.05);
  const auto b = assess_session(m, session, 3.0, &warnings, opts);
  CHECK(b.clipped);
  CHECK(b.window_s == 120.0);
  CHECK(b.pre_frames + b.post_frames == session.frames.size());
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(assess_session(m, session, 0.0, nullptr, opts), ConfigError);
}

TEST_CASE("therapy report counts second-to-fourth quadrant moves") {
  TherapyReport r;
  PatientAssessment a;
  a.patient = "p01";
  a.pre = to_quadrant(2, 8);
  a.post = to_quadrant(8, 2);
  r.patients.push_back(a);
  const auto dir = std::filesystem::temp_directory_path() / "biomm_test_quadrants";
  std::filesystem::create_directories(dir);
  write_quadrant_csv(dir / "q.csv", r);
  std::ifstream is(dir / "q.csv");
  std::string header, pre, post;
  std::getline(is, header);
  std::getline(is, pre);
  std::getline(is, post);
  CHECK(header == "patient,phase,valence_scaled,arousal_scaled,quadrant");
  CHECK(pre == "p01,pre,-0.75,0.75,LVHA");
  CHECK(post == "p01,post,0.75,-0.75,HVLA");
  std::filesystem::remove_all(dir);
  CHECK(to_json(r)["patients"][0]["post"]["quadrant"] == "HVLA");
}
