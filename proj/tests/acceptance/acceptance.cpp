// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `--only N[,M...]` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "biomm/bae.hpp"
#include "biomm/cli.hpp"
#include "biomm/evaluation.hpp"
#include "biomm/gradcheck_suite.hpp"
#include "biomm/ops.hpp"
#include "biomm/rng.hpp"
#include "biomm/session_io.hpp"
#include "biomm/synth.hpp"
#include "biomm/training.hpp"
#include "oracles.hpp"

using namespace biomm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(const std::optional<double>& v) { return v ? fmt("%.1f", *v) : std::string("undefined"); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

std::vector<SyncedSample> synchronize_all(const std::vector<SessionData>& sessions) {
  std::vector<SyncedSample> out;
  for (const auto& s : sessions) {
    auto r = synchronize(s);
    out.insert(out.end(), r.samples.begin(), r.samples.end());
  }
  return out;
}

// Hand-derived length chains, independent of the library's config helpers.
std::vector<std::size_t> encoder_chain_oracle(std::size_t len, std::initializer_list<std::size_t> kernels) {
  std::vector<std::size_t> out;
  for (std::size_t k : kernels) {
    len = oracle::valid_len(len, k);
    out.push_back(len);
    len = oracle::pool_len(len, 2, 2);
    out.push_back(len);
  }
  return out;
}

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  std::string worst_name, failed;
  std::set<std::string> names;
  for (const auto& r : results) {
    names.insert(r.name);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!(r.max_rel_error <= 1e-4)) failed += " " + r.name;
  }
  bool pass = failed.empty() && secs < 300.0;
  for (const char* n : {"conv1d_valid", "conv1d_full", "conv2d_valid", "maxpool1d", "unpool1d", "linear", "concat",
                        "relu", "mse_loss", "bae", "bmmn", "bmmn_bae1", "bmmn_bae2"})
    if (!names.count(n)) {
      pass = false;
      failed += std::string(" missing:") + n;
    }
  return {pass, std::to_string(results.size()) + " cases, worst " + worst_name + " " + fmt("%.2e", worst) + ", " +
                    fmt("%.1f s", secs) + (failed.empty() ? "" : ", failed:" + failed)};
}

Outcome shape_conformance() {
  BaeConfig bae;
  const auto enc = bae.encoder_chain();
  const auto dec = bae.decoder_chain();
  bool pass = enc == std::vector<std::size_t>{801, 400, 301, 150, 101, 50} &&
              dec == std::vector<std::size_t>{101, 150, 301, 400, 801, 1000} && bae.latent == 128;
  const auto enc_oracle = encoder_chain_oracle(1000, {200, 100, 50});
  pass = pass && enc == enc_oracle;

  const auto bio = encoder_chain_oracle(1000, {200, 100, 50, 25});
  const std::size_t bio_oracle = 2 * (4 * bio[1] + 2 * bio[3] + 2 * bio[5] + 2 * bio[7]);
  const std::size_t spatial = 256;
  ModelConfig m;
  const std::size_t w_bmmn = m.stream_widths().at(0).second;
  m.variant = FusionVariant::BMMN_BAE_1;
  const std::size_t w_bae1 = m.head_input_width();
  m.variant = FusionVariant::BMMN_BAE_2;
  const std::size_t w_bae2 = m.head_input_width();
  pass = pass && w_bmmn == 4052 && bio_oracle == 4052 && w_bae1 == 2 * 128 + spatial && w_bae1 == 512 &&
         w_bae2 == bio_oracle + 2 * 128 + spatial && w_bae2 == 4564;

  // One real forward pass per variant.
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.trials_per_subject = 1;
  spec.trial_seconds = 8;
  const auto sample = synchronize(gen_sessions(spec).at(0)).samples.at(0);
  std::string outs;
  for (auto v : {FusionVariant::BMMN, FusionVariant::BMMN_BAE_1, FusionVariant::BMMN_BAE_2}) {
    ModelConfig c;
    c.variant = v;
    AffectModel model(c, 1);
    Graph g;
    const auto out = forward(g, model, sample);
    pass = pass && out.output.size() == 10 && out.streams.at(0).size() == (v == FusionVariant::BMMN_BAE_1 ? 256 : 4052);
    outs += " " + std::to_string(out.output.size());
  }
  return {pass, "enc/dec chains ok, |z|=" + std::to_string(bae.latent) + ", widths " + std::to_string(w_bmmn) + "/" +
                    std::to_string(w_bae1) + "/" + std::to_string(w_bae2) + ", head outputs" + outs};
}

Outcome convolution_oracles() {
  Rng rng(2024);
  double worst = 0.0;
  const std::size_t cases = 200;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t cin = 1 + rng.below(4), cout = 1 + rng.below(4), k = 1 + rng.below(6);
    const std::size_t len = k + rng.below(20), stride = 1 + rng.below(3);
    Graph g;
    {
      auto x = random_values(cin * len, rng), w = random_values(cout * cin * k, rng);
      Var xv = g.constant(Tensor({cin, len}, x)), wv = g.constant(Tensor({cout, cin, k}, w));
      worst = std::max(worst, max_abs_diff(conv1d_valid(xv, wv, stride).value().values(),
                                           oracle::conv1d_valid(x, cin, len, w, cout, k, stride)));
      worst = std::max(worst,
                       max_abs_diff(conv1d_full(xv, wv).value().values(), oracle::conv1d_full(x, cin, len, w, cout, k)));
    }
    {
      const std::size_t kh = 1 + rng.below(4), kw = 1 + rng.below(4);
      const std::size_t h = kh + rng.below(8), wd = kw + rng.below(8);
      auto x = random_values(cin * h * wd, rng), w = random_values(cout * cin * kh * kw, rng);
      const auto y = conv2d_valid(g.constant(Tensor({cin, h, wd}, x)), g.constant(Tensor({cout, cin, kh, kw}, w)), stride);
      worst = std::max(worst, max_abs_diff(y.value().values(), oracle::conv2d_valid(x, cin, h, wd, w, cout, kh, kw, stride)));
    }
  }
  return {worst <= 1e-10, std::to_string(cases) + " cases x 3 ops, max abs diff " + fmt("%.2e", worst)};
}

Outcome bae_pretraining() {
  SynthSpec spec;
  const auto samples = synchronize_all(gen_sessions(spec));
  const auto segments = channel_segments(samples, Channel::ECG, 200);
  PretrainConfig cfg;  // 30 epochs
  BaeModel model(bae_prefix(Channel::ECG), BaeConfig{});
  ParamStore a(cfg.seed), b(cfg.seed);
  const auto ra = pretrain(model, a, segments, cfg);
  const auto rb = pretrain(model, b, segments, cfg);
  bool same = ra.loss_curve == rb.loss_curve;
  for (const auto& [name, p] : a) same = same && p.value == b.at(name).value;
  const double first = ra.loss_curve.front(), last = ra.loss_curve.back();
  const bool pass = segments.size() == 200 && ra.loss_curve.size() == 31 && last <= 0.5 * first && same;
  return {pass, std::to_string(segments.size()) + " segments, mse " + fmt("%.4g", first) + " -> " + fmt("%.4g", last) +
                    " (ratio " + fmt("%.3f", last / first) + "), repeat run " + (same ? "identical" : "DIFFERS")};
}

Outcome planted_learnability() {
  SynthSpec spec;  // 4 subjects x 8 trials
  const auto samples = synchronize_all(gen_sessions(spec));
  TrainConfig cfg;
  const auto split = split_samples(samples, cfg.split);
  AffectModel model = train(split.train, cfg).model;
  const auto ev = evaluate(model, split.eval);
  const auto& p = ev.report.precision;
  const bool pass = p[1] && *p[1] >= 90.0 && p[0] && *p[0] >= 90.0;
  return {pass, "held-out " + nlohmann::json(split.eval_subjects).dump() + ", " + std::to_string(ev.items.size()) +
                    " trials: arousal " + pct(p[1]) + "%, valence " + pct(p[0]) + "%"};
}

Outcome ablation_direction() {
  SynthSpec spec;
  spec.n_subjects = 6;
  spec.planted.eda_arousal = false;
  const auto samples = synchronize_all(gen_sessions(spec));
  TrainConfig cfg;
  cfg.split.n_holdout = 2;
  const auto report = ablation_run(samples, cfg);
  const auto& bio = report.arms.at(0).evaluation.report;
  const auto& face = report.arms.at(1).evaluation.report;
  const auto& multi = report.arms.at(2).evaluation.report;
  const double bio_a = bio.precision[1].value_or(0.0), face_a = face.precision[1].value_or(0.0);
  const double bio_m = bio.average.value_or(0.0), face_m = face.average.value_or(0.0),
               multi_m = multi.average.value_or(0.0);
  const bool pass = bio_a - face_a >= 20.0 && multi_m >= bio_m && multi_m >= face_m;
  return {pass, "arousal bio " + pct(bio.precision[1]) + " vs face " + pct(face.precision[1]) + "; macro avg bio " +
                    fmt("%.1f", bio_m) + ", face " + fmt("%.1f", face_m) + ", multi " + fmt("%.1f", multi_m)};
}

Outcome fusion_structure() {
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.trials_per_subject = 1;
  spec.trial_seconds = 8;
  const auto sample = synchronize(gen_sessions(spec).at(0)).samples.at(2);
  auto perturb_bio = [](AffectModel& m) {
    for (auto& [name, p] : m.params)
      if (name.rfind("bio.", 0) == 0)
        for (auto& v : p.value.values()) v += 0.05;
  };
  auto output = [&](AffectModel& m) {
    Graph g;
    const auto v = forward(g, m, sample).output.value().values();
    return std::vector<double>(v.begin(), v.end());
  };

  ModelConfig c2;
  c2.variant = FusionVariant::BMMN_BAE_2;
  AffectModel bae2(c2, 11);
  ModelConfig c1 = c2;
  c1.variant = FusionVariant::BMMN_BAE_1;
  AffectModel bae1(c1, 11);
  for (const auto& [name, p] : bae2.params)  // give BAE-1 a bio network it could (but must not) use
    if (name.rfind("bio.", 0) == 0 && !bae1.params.contains(name)) bae1.params.add(name, p.value.shape()).value = p.value;

  const auto y1 = output(bae1);
  perturb_bio(bae1);
  const double d1 = max_abs_diff(y1, output(bae1));
  const auto y2 = output(bae2);
  perturb_bio(bae2);
  const double d2 = max_abs_diff(y2, output(bae2));

  Graph g;
  const auto out = forward(g, bae2, sample);
  const auto lb = total_loss(g, out, sample.label, LossWeights{1.0, 0.0});
  const double gap = std::abs(lb.total.value().item() - lb.bmmn);
  const bool pass = d1 == 0.0 && d2 > 1e-9 && gap <= 1e-12 && lb.bae > 0.0;
  return {pass, "BAE-1 output change " + fmt("%.3g", d1) + ", BAE-2 " + fmt("%.3g", d2) + "; lambda_bae=0 gap " +
                    fmt("%.3g", gap) + " (L_Bae=" + fmt("%.4g", lb.bae) + " ignored)"};
}

// Few long trials let the face stream memorize each trial's arousal, which does
// not transfer to a drifting session; many short trials force arousal onto
// the heart-rate pathway.
AffectModel therapy_model() {
  SynthSpec spec;
  spec.n_subjects = 8;
  spec.trials_per_subject = 32;
  spec.trial_seconds = 4;
  TrainConfig cfg;
  cfg.lr = 1e-3;
  const auto samples = synchronize_all(gen_sessions(spec));
  return train(split_samples(samples, cfg.split).train, cfg).model;
}

Outcome therapy_assessment() {
  const auto corner = to_quadrant(9, 1);
  bool pass = corner.valence_scaled == 1.0 && corner.arousal_scaled == -1.0 && corner.quadrant == Quadrant::HVLA;
  AffectModel model = therapy_model();
  SynthSpec spec;
  spec.therapy.patients = 1;  // 2/8 -> 8/2 drift over the middle of a 32 minute session
  const auto report = therapy_assess(model, gen_therapy_sessions(spec));
  const auto& p = report.patients.at(0);
  pass = pass && report.q2_to_q4 == 1 && p.pre.quadrant == Quadrant::LVHA && p.post.quadrant == Quadrant::HVLA &&
         p.movement > 0.3;
  std::ostringstream d;
  d << "(9,1)->(" << corner.valence_scaled << "," << corner.arousal_scaled << "); pre " << quadrant_name(p.pre.quadrant)
    << " (" << fmt("%.2f", p.pre.valence_scaled) << "," << fmt("%.2f", p.pre.arousal_scaled) << ") post "
    << quadrant_name(p.post.quadrant) << " (" << fmt("%.2f", p.post.valence_scaled) << ","
    << fmt("%.2f", p.post.arousal_scaled) << "), movement " << fmt("%.2f", p.movement) << ", Q2->Q4 "
    << report.q2_to_q4;
  return {pass, d.str()};
}

int cli(std::vector<std::string> args, std::string* err = nullptr) {
  args.insert(args.begin(), "biomm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (err) *err = e.str();
  return code;
}

Outcome pipeline_totality() {
  const fs::path dir = fs::temp_directory_path() / "biomm_acceptance_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& s) { return (dir / s).string(); };
  std::ofstream(dir / "spec.json") << R"({"therapy":{"patients":1}})";
  std::ofstream(dir / "cfg.json") << R"({"epochs":1})";

  std::string err, where;
  bool ok = true;
  auto step = [&](const char* name, std::vector<std::string> args) {
    if (!ok) return;
    if (cli(std::move(args), &err) != 0) {
      ok = false;
      where = std::string(name) + ": " + err;
    }
  };
  step("synth", {"synth", "--spec", p("spec.json"), "--out", p("corpus")});
  step("preprocess", {"preprocess", "--in", p("corpus"), "--out", p("samples.bin")});
  step("train", {"train", "--variant", "bmmn", "--data", p("samples.bin"), "--config", p("cfg.json"), "--out", p("m")});
  step("eval", {"eval", "--model", p("m"), "--data", p("samples.bin"), "--out", p("eval.json"), "--all", "--per-frame"});
  step("assess", {"assess", "--model", p("m"), "--session", p("corpus/therapy"), "--out", p("assess.json")});
  if (!ok) return {false, where};

  const auto side = nlohmann::json::parse(std::ifstream(dir / "samples.json"));
  const auto eval = nlohmann::json::parse(std::ifstream(dir / "eval.json"));
  const auto samples = read_samples(dir / "samples.bin");
  std::size_t frames = 0, sessions = 0, bad_segments = 0, therapy_frames = 0, therapy_samples = 0;
  for (const auto& s : load_corpus(dir / "corpus")) {
    frames += s.frames.size();
    ++sessions;
  }
  for (const auto& s : samples)
    for (const auto& seg : s.segments) bad_segments += seg.window.size() != 1000;
  for (const auto& entry : fs::directory_iterator(dir / "corpus" / "therapy")) {
    const SessionData s = load_session(entry.path());
    therapy_frames += s.frames.size();
    const auto r = synchronize(s);
    therapy_samples += r.samples.size();
    for (const auto& x : r.samples)
      for (const auto& seg : x.segments) bad_segments += seg.window.size() != 1000;
  }
  const std::size_t dropped = side["dropped_frames"].get<std::size_t>() + (therapy_frames - therapy_samples);
  const bool pass = sessions == 32 && samples.size() == frames && dropped == 0 && bad_segments == 0 &&
                    eval["samples"].get<std::size_t>() == samples.size() && therapy_frames > 0;
  fs::remove_all(dir);
  return {pass, std::to_string(sessions) + " sessions + therapy, " + std::to_string(frames + therapy_frames) +
                    " frames, dropped " + std::to_string(dropped) + ", segments != 1000: " +
                    std::to_string(bad_segments) + ", scored " + std::to_string(eval["samples"].get<std::size_t>())};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--only N[,M...]]\n";
      return 2;
    }
  }
  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", 300, gradient_integrity},
      {2, "shape conformance", 60, shape_conformance},
      {3, "convolution oracle equivalence", 60, convolution_oracles},
      {4, "auto-encoder pretraining", 600, bae_pretraining},
      {5, "planted learnability", 1800, planted_learnability},
      {6, "ablation direction", 3600, ablation_direction},
      {7, "fusion structure", 60, fusion_structure},
      {8, "therapy assessment", 600, therapy_assessment},
      {9, "pipeline totality", 300, pipeline_totality},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += " (over time budget)";
    }
    failed += !o.pass;
    std::printf("[%s] %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
