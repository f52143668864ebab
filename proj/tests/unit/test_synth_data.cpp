#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "biomm/error.hpp"
#include "biomm/rng.hpp"
#include "biomm/session_io.hpp"
#include "biomm/synth.hpp"

using namespace biomm;
namespace fs = std::filesystem;

namespace {

// R peaks: local maxima above half the QRS amplitude.
std::size_t count_r_peaks(const std::vector<double>& x) {
  std::size_t n = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i)
    if (x[i] > 0.6 && x[i] >= x[i - 1] && x[i] > x[i + 1]) ++n;
  return n;
}

}  // namespace

TEST_CASE("heart rate follows arousal") {
  CHECK(heart_rate_bpm(1.0) == 60.0);
  CHECK(heart_rate_bpm(9.0) == 100.0);
  for (double arousal : {1.0, 5.0, 9.0}) {
    const auto ecg = gen_ecg(one_hot_label(5, arousal, 5, 0), 60.0, 800.0, 3);
    const double expected = heart_rate_bpm(arousal);
    CHECK(std::abs(static_cast<double>(count_r_peaks(ecg.samples)) - expected) <= 1.0);
  }
}

namespace {

std::vector<double> ecg_features(const std::vector<double>& w) {
  double mean = 0.0, var = 0.0, diff = 0.0, above = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    var += (w[i] - mean) * (w[i] - mean);
    above += w[i] > 0.5;
    if (i) diff += std::abs(w[i] - w[i - 1]);
  }
  const double n = static_cast<double>(w.size());
  return {1.0, static_cast<double>(count_r_peaks(w)), mean, var / n, diff / n, above / n};
}

// Solves the normal equations with a tiny ridge term by Gaussian elimination.
std::vector<double> least_squares(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t p = x[0].size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += x[r][i] * x[r][j];
      a[i][p] += x[r][i] * y[r];
    }
  for (std::size_t i = 0; i < p; ++i) a[i][i] += 1e-9;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r)
      if (r != c) {
        const double f = a[r][c] / a[c][c];
        for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
      }
  }
  std::vector<double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

}  // namespace

TEST_CASE("arousal is linearly decodable from simple ECG window features") {
  Rng rng(5);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 120; ++i) {
    const double arousal = rng.uniform(1.0, 9.0);
    const auto trace = rescale(gen_ecg(one_hot_label(5, arousal, 5, 0), 12.0, 128.0, 100 + i, 0.05)).trace;
    const double centre[] = {6.0};
    const auto w = segment_for_frames(trace, centre, {}).at(0).window;
    x.push_back(ecg_features(w));
    y.push_back(arousal);
  }
  const std::vector<std::vector<double>> fit_x(x.begin(), x.begin() + 80), test_x(x.begin() + 80, x.end());
  const std::vector<double> fit_y(y.begin(), y.begin() + 80), test_y(y.begin() + 80, y.end());
  const auto beta = least_squares(fit_x, fit_y);
  double mean = 0.0, ss_res = 0.0, ss_tot = 0.0;
  for (double v : test_y) mean += v;
  mean /= static_cast<double>(test_y.size());
  for (std::size_t r = 0; r < test_x.size(); ++r) {
    double pred = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) pred += beta[i] * test_x[r][i];
    ss_res += (test_y[r] - pred) * (test_y[r] - pred);
    ss_tot += (test_y[r] - mean) * (test_y[r] - mean);
  }
  CHECK(1.0 - ss_res / ss_tot > 0.8);
}

TEST_CASE("generators are deterministic per seed") {
  const auto l = one_hot_label(4, 6, 5, 3);
  CHECK(gen_ecg(l, 10, 128, 5, 0.02).samples == gen_ecg(l, 10, 128, 5, 0.02).samples);
  CHECK(gen_ecg(l, 10, 128, 5, 0.02).samples != gen_ecg(l, 10, 128, 6, 0.02).samples);
  CHECK(gen_eda(l, 10, 128, 5, 0.02).samples == gen_eda(l, 10, 128, 5, 0.02).samples);
  CHECK(gen_face(l, 9).pixels == gen_face(l, 9).pixels);
  CHECK(gen_ecg(l, 10, 128, 5).samples.size() == 1280);
  CHECK_THROWS_AS(gen_ecg(l, 10, 100, 5), ConfigError);
}

TEST_CASE("EDA burst rate grows with arousal") {
  std::size_t low = 0, high = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    low += gen_eda_detailed(LabelPath::constant(one_hot_label(5, 1, 5, 0)), 300, 128, seed).burst_onsets_s.size();
    high += gen_eda_detailed(LabelPath::constant(one_hot_label(5, 9, 5, 0)), 300, 128, seed).burst_onsets_s.size();
  }
  // Expected counts: 20 * 300 s * 0.02 * a -> 120 and 1080.
  CHECK(low == doctest::Approx(120).epsilon(0.3));
  CHECK(high == doctest::Approx(1080).epsilon(0.15));
  EdaOptions fixed;
  fixed.encode_arousal = false;
  std::size_t a = 0, b = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    a += gen_eda_detailed(LabelPath::constant(one_hot_label(5, 1, 5, 0)), 300, 128, seed, 0, fixed).burst_onsets_s.size();
    b += gen_eda_detailed(LabelPath::constant(one_hot_label(5, 9, 5, 0)), 300, 128, seed, 0, fixed).burst_onsets_s.size();
  }
  CHECK(a == b);
}

TEST_CASE("face intensity encodes valence, orientation encodes emotion") {
  FaceOptions quiet;
  quiet.noise_sigma = 0.0;
  CHECK(gen_face(one_hot_label(1, 5, 5, 0), 1, quiet).mean() == doctest::Approx(0.06));
  CHECK(gen_face(one_hot_label(9, 5, 5, 0), 1, quiet).mean() == doctest::Approx(0.94));
  CHECK(gen_face(one_hot_label(5, 5, 5, 0), 1, quiet).mean() == doctest::Approx(0.5));
  // Emotion 0 ramps left to right.
  const Image e0 = gen_face(one_hot_label(5, 5, 5, 0), 1, quiet);
  CHECK(e0.at(32, 63) > e0.at(32, 0));
  CHECK(e0.at(0, 32) == doctest::Approx(e0.at(63, 32)));
  quiet.encode_valence = false;
  CHECK(gen_face(one_hot_label(9, 5, 5, 0), 1, quiet).mean() == doctest::Approx(0.5));
}

TEST_CASE("label paths interpolate over the ramp") {
  LabelPath p{one_hot_label(2, 8, 2, 1), one_hot_label(8, 2, 8, 1), 0.4, 0.6};
  CHECK(p.at(0.1).valence == 2.0);
  CHECK(p.at(0.5).valence == doctest::Approx(5.0));
  CHECK(p.at(0.5).arousal == doctest::Approx(5.0));
  CHECK(p.at(0.9).arousal == 2.0);
}

TEST_CASE("sampled labels stay in range and liking tracks valence") {
  SynthSpec spec;
  Rng rng(4);
  double cov = 0.0, mv = 0.0, ml = 0.0;
  std::vector<AffectLabel> ls;
  for (int i = 0; i < 2000; ++i) {
    ls.push_back(draw_label(rng, spec));
    CHECK_NOTHROW(ls.back().validate());
    mv += ls.back().valence;
    ml += ls.back().liking;
  }
  mv /= 2000;
  ml /= 2000;
  for (const auto& l : ls) cov += (l.valence - mv) * (l.liking - ml);
  CHECK(cov > 0.0);
  CHECK(mv == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("corpus layout and counts") {
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.trials_per_subject = 3;
  spec.trial_seconds = 5;
  spec.therapy.patients = 1;
  spec.therapy.minutes = 1;
  const auto sessions = gen_sessions(spec);
  REQUIRE(sessions.size() == 6);
  CHECK(sessions[0].session_id == "s01_t01");
  CHECK(sessions[5].session_id == "s02_t03");
  CHECK(sessions[4].subject_id == "s02");
  CHECK(sessions[0].frames.size() == 5);
  CHECK(sessions[0].traces[0].samples.size() == 640);
  // The landmark box grown by the default 20% margin is the face square.
  const Image& canvas = std::get<Image>(sessions[0].frames[0].payload);
  const Box b = landmark_box(canvas, sessions[0].frames[0].landmarks);
  CHECK(b.x0 == doctest::Approx(8.0));
  CHECK(b.x1 == doctest::Approx(72.0));

  const auto dir = fs::temp_directory_path() / "biomm_test_synth";
  fs::remove_all(dir);
  gen_dataset(spec, dir);
  CHECK(fs::exists(dir / "labels.jsonl"));
  CHECK(fs::exists(dir / "spec.json"));
  CHECK(fs::exists(dir / "therapy" / "p01" / "p01_ECG.csv"));
  const auto corpus = load_corpus(dir);
  CHECK(corpus.size() == 6);
  const auto therapy = load_session(dir / "therapy" / "p01");
  CHECK_FALSE(therapy.label.has_value());
  CHECK(therapy.traces[0].sample_rate_hz == 800.0);
  CHECK(therapy.frames.size() == 6);
  fs::remove_all(dir);
}

TEST_CASE("spec json round trip and validation") {
  SynthSpec spec;
  spec.n_subjects = 3;
  spec.planted.eda_arousal = false;
  spec.therapy.patients = 2;
  const SynthSpec back = synth_spec_from_json(to_json(spec));
  CHECK(back.n_subjects == 3);
  CHECK_FALSE(back.planted.eda_arousal);
  CHECK(back.therapy.patients == 2);
  CHECK(to_json(back) == to_json(spec));
  CHECK_THROWS_AS(synth_spec_from_json({{"n_subjects", 0}}), ConfigError);
  CHECK_THROWS_AS(synth_spec_from_json({{"sample_rate_hz", 250}}), ConfigError);
  CHECK_THROWS_AS(synth_spec_from_json({{"n_subjects", "four"}}), ConfigError);
}
