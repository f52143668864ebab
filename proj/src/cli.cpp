#include "biomm/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "biomm/bae.hpp"
#include "biomm/error.hpp"
#include "biomm/evaluation.hpp"
#include "biomm/gradcheck_suite.hpp"
#include "biomm/rng.hpp"
#include "biomm/session_io.hpp"
#include "biomm/synth.hpp"
#include "biomm/training.hpp"

namespace biomm {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"config_hash", m.config_hash}, {"seed", m.seed},        {"inputs", m.inputs},
          {"outputs", m.outputs}, {"version", m.version},         {"wall_time_s", m.wall_time_s}};
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(config.dump())));
  return buf;
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

/// Manifest path for a file output (`x.json` -> `x.manifest.json`) or a
/// directory output.
fs::path manifest_path(const fs::path& out, bool is_dir) {
  if (is_dir) return out / "manifest.json";
  fs::path p = out;
  return p.replace_extension("").string() + ".manifest.json";
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  return p.replace_extension("").string() + suffix;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::optional<std::uint64_t> seed;
  bool plain = false;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void finish(RunManifest m, const fs::path& path) const {
    m.version = BIOMM_VERSION;
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json_file(path, to_json(m));
  }
  std::string colored(const std::string& s, bool good) const {
    if (plain) return s;
    return (good ? "\033[32m" : "\033[31m") + s + "\033[0m";
  }
};

TrainConfig load_train_config(const std::string& path, const Context& ctx) {
  TrainConfig c = path.empty() ? TrainConfig{} : train_config_from_json(read_json_file(path));
  if (ctx.seed) c.seed = *ctx.seed;
  return c;
}

std::vector<SyncedSample> load_labeled(const fs::path& path) {
  auto samples = read_samples(path);
  if (samples.empty()) throw IngestError(path.string() + " holds no samples");
  for (const auto& s : samples)
    if (!s.labeled) throw IngestError(path.string() + ": session " + s.session_id + " has no label");
  return samples;
}

PipelineOptions pipeline_options(const json& j) {
  PipelineOptions o;
  try {
    o.segment.length = j.value("segment_length", o.segment.length);
    if (j.contains("alignment")) o.segment.alignment = parse_alignment(j.at("alignment").get<std::string>());
    o.crop.size = j.value("face_size", o.crop.size);
    o.crop.margin = j.value("crop_margin", o.crop.margin);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("preprocess config: ") + e.what());
  }
  if (o.segment.length == 0) throw ConfigError("segment_length must be positive");
  if (o.crop.size == 0) throw ConfigError("face_size must be positive");
  if (o.crop.margin < 0.0) throw ConfigError("crop_margin must be non-negative");
  return o;
}

json pipeline_json(const PipelineOptions& o) {
  return {{"segment_length", o.segment.length},
          {"alignment", alignment_name(o.segment.alignment)},
          {"face_size", o.crop.size},
          {"crop_margin", o.crop.margin}};
}

int cmd_synth(const Context& ctx, const std::string& spec_path, const fs::path& out) {
  SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_json_file(spec_path));
  if (ctx.seed) spec.rng_seed = *ctx.seed;
  spec.validate();
  gen_dataset(spec, out);
  ctx.out << "wrote " << spec.n_subjects * spec.trials_per_subject << " sessions";
  if (spec.therapy.patients) ctx.out << " and " << spec.therapy.patients << " therapy session(s)";
  ctx.out << " to " << out.string() << '\n';
  RunManifest m{"synth", config_hash(to_json(spec)), spec.rng_seed, {}, {out.string()}, "", 0.0};
  if (!spec_path.empty()) m.inputs.push_back(spec_path);
  ctx.finish(m, manifest_path(out, true));
  return 0;
}

int cmd_preprocess(const Context& ctx, const fs::path& in, const fs::path& out, const std::string& config_path) {
  const PipelineOptions opts = pipeline_options(config_path.empty() ? json::object() : read_json_file(config_path));
  const auto sessions = load_corpus(in);
  std::vector<SyncedSample> samples;
  std::vector<std::string> warnings;
  std::size_t frames = 0;
  json per_session = json::array();
  for (const auto& s : sessions) {
    auto r = synchronize(s, opts);
    frames += s.frames.size();
    per_session.push_back({{"session", s.session_id}, {"frames", s.frames.size()}, {"samples", r.samples.size()}});
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    samples.insert(samples.end(), r.samples.begin(), r.samples.end());
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_samples(out, samples);
  for (const auto& w : warnings) ctx.err << "warning: " << w << '\n';
  const json cfg = pipeline_json(opts);
  json report = {{"sessions", sessions.size()},
                 {"frames", frames},
                 {"samples", samples.size()},
                 {"dropped_frames", frames - samples.size()},
                 {"segment_length", opts.segment.length},
                 {"options", cfg},
                 {"per_session", per_session},
                 {"warnings", warnings}};
  write_json_file(sidecar(out, ".json"), report);
  ctx.out << "preprocessed " << sessions.size() << " sessions, " << samples.size() << " samples from " << frames
          << " frames\n";
  RunManifest m{"preprocess", config_hash(cfg), 0, {in.string()}, {out.string(), sidecar(out, ".json").string()}, "", 0};
  if (!config_path.empty()) m.inputs.push_back(config_path);
  ctx.finish(m, manifest_path(out, false));
  return 0;
}

void save_bae_dir(const fs::path& dir, const BaeConfig& cfg, const ParamStore& store) {
  fs::create_directories(dir);
  write_json_file(dir / "bae.json", {{"format", "biomm-bae"}, {"config", to_json(cfg)}});
  save_checkpoint(dir / "bae.ckpt", store);
}

std::pair<BaeConfig, ParamStore> load_bae_dir(const fs::path& dir) {
  if (!fs::exists(dir / "bae.json")) throw ConfigError("no pretrained auto-encoder in " + dir.string());
  const json j = read_json_file(dir / "bae.json");
  return {bae_config_from_json(j.at("config")), load_checkpoint(dir / "bae.ckpt")};
}

int cmd_pretrain(const Context& ctx, const fs::path& data, const std::string& config_path, const fs::path& out) {
  const TrainConfig cfg = load_train_config(config_path, ctx);
  cfg.model.bae.validate();
  const auto split = split_samples(load_labeled(data), cfg.split);
  ParamStore store(cfg.seed);
  std::vector<EpochMetrics> metrics;
  for (Channel ch : kChannels) {
    BaeModel bae(bae_prefix(ch), cfg.model.bae);
    const auto segs = channel_segments(split.train, ch, cfg.bae_segments);
    const auto curve = pretrain(bae, store, segs, {cfg.bae_epochs, cfg.batch_size, cfg.lr, cfg.seed}).loss_curve;
    for (std::size_t e = 0; e < curve.size(); ++e) metrics.push_back({bae.prefix(), e, curve[e], 0.0, curve[e]});
    ctx.out << bae.prefix() << ": " << segs.size() << " segments, mse " << format_double(curve.front()) << " -> "
            << format_double(curve.back()) << '\n';
  }
  save_bae_dir(out, cfg.model.bae, store);
  write_metrics_csv(out / "metrics.csv", metrics);
  RunManifest m{"pretrain-bae", config_hash(to_json(cfg)), cfg.seed, {data.string()}, {out.string()}, "", 0};
  if (!config_path.empty()) m.inputs.push_back(config_path);
  ctx.finish(m, manifest_path(out, true));
  return 0;
}

int cmd_encode(const Context& ctx, const fs::path& bae_dir, const fs::path& data, const fs::path& out) {
  auto [cfg, store] = load_bae_dir(bae_dir);
  const auto samples = read_samples(data);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw Error("cannot write " + out.string());
  os << "session,frame_index,channel";
  for (std::size_t i = 0; i < cfg.latent; ++i) os << ",z" << i;
  os << '\n';
  for (const auto& s : samples)
    for (Channel ch : kChannels) {
      BaeModel bae(bae_prefix(ch), cfg);
      const auto z = encode_segment(bae, store, s.segment(ch)).z;
      os << s.session_id << ',' << s.frame_index << ',' << channel_name(ch);
      for (double v : z) os << ',' << format_double(v);
      os << '\n';
    }
  ctx.out << "encoded " << samples.size() << " samples\n";
  ctx.finish({"encode-bae", config_hash(to_json(cfg)), store.seed(), {bae_dir.string(), data.string()}, {out.string()}, "", 0},
             manifest_path(out, false));
  return 0;
}

int cmd_train(const Context& ctx, const std::string& variant, const fs::path& data, const std::string& config_path,
              const fs::path& out, std::string bae_dir) {
  TrainConfig cfg = load_train_config(config_path, ctx);
  cfg.model.variant = parse_variant(variant);
  if (bae_dir.empty() && !config_path.empty()) bae_dir = read_json_file(config_path).value("bae_path", std::string());
  std::optional<ParamStore> pretrained;
  if (cfg.model.variant != FusionVariant::BMMN) {
    if (bae_dir.empty())
      throw ConfigError("variant " + variant + " needs a pretrained auto-encoder: pass --bae DIR (from pretrain-bae)");
    auto [bae_cfg, store] = load_bae_dir(bae_dir);
    if (to_json(bae_cfg) != to_json(cfg.model.bae))
      throw ConfigError("auto-encoder in " + bae_dir + " was built with a different configuration");
    pretrained = std::move(store);
  }
  const auto split = split_samples(load_labeled(data), cfg.split);
  auto result = train(split.train, cfg, pretrained ? &*pretrained : nullptr);
  result.model.info = {{"train_subjects", split.train_subjects},
                       {"eval_subjects", split.eval_subjects},
                       {"eval_sessions", json::array()},
                       {"train_config", to_json(cfg)}};
  for (const auto& s : split.eval)
    if (result.model.info["eval_sessions"].empty() || result.model.info["eval_sessions"].back() != s.session_id)
      result.model.info["eval_sessions"].push_back(s.session_id);
  save_model(out, result.model);
  write_metrics_csv(out / "metrics.csv", result.metrics);
  const auto& last = result.metrics.back();
  ctx.out << "trained " << variant << " on " << split.train.size() << " samples (" << split.train_subjects.size()
          << " subjects); final loss " << format_double(last.loss_total) << '\n';
  RunManifest m{"train", config_hash(to_json(cfg)), cfg.seed, {data.string()}, {out.string()}, "", 0};
  if (!config_path.empty()) m.inputs.push_back(config_path);
  if (!bae_dir.empty()) m.inputs.push_back(bae_dir);
  ctx.finish(m, manifest_path(out, true));
  return 0;
}

int cmd_eval(const Context& ctx, const fs::path& model_dir, const fs::path& data, const fs::path& out, bool per_frame,
             bool all) {
  AffectModel model = load_model(model_dir);
  auto samples = load_labeled(data);
  if (!all && model.info.contains("eval_sessions")) {
    const auto keep = model.info["eval_sessions"].get<std::vector<std::string>>();
    std::vector<SyncedSample> held;
    for (auto& s : samples)
      if (std::find(keep.begin(), keep.end(), s.session_id) != keep.end()) held.push_back(std::move(s));
    if (held.empty()) throw UsageError("none of the model's held-out sessions are in " + data.string() + " (use --all)");
    samples = std::move(held);
  }
  const auto ev = evaluate(model, samples, per_frame);
  json report = to_json(ev.report);
  report["scoring"] = per_frame ? "frame" : "trial";
  report["variant"] = variant_name(model.config.variant);
  write_json_file(out, report);
  write_predictions_csv(sidecar(out, ".predictions.csv"), ev.items);
  write_precision_csv(sidecar(out, ".csv"), {{std::string(variant_name(model.config.variant)), ev.report}});
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    ctx.out << kTargetNames[t] << ": ";
    if (ev.report.precision[t]) ctx.out << format_double(*ev.report.precision[t]);
    else ctx.out << "-";
    ctx.out << (t + 1 < kTargetCount ? "  " : "\n");
  }
  ctx.out << "average: " << (ev.report.average ? format_double(*ev.report.average) : "-") << " over "
          << ev.report.samples << (per_frame ? " frames\n" : " trials\n");
  ctx.finish({"eval", config_hash(to_json(model.config)), model.params.seed(), {model_dir.string(), data.string()},
              {out.string(), sidecar(out, ".predictions.csv").string(), sidecar(out, ".csv").string()}, "", 0},
             manifest_path(out, false));
  return 0;
}

int cmd_ablate(const Context& ctx, const fs::path& data, const std::string& config_path, const fs::path& out,
               bool parallel) {
  const TrainConfig cfg = load_train_config(config_path, ctx);
  const auto report = ablation_run(load_labeled(data), cfg, parallel);
  fs::create_directories(out);
  write_json_file(out / "ablation.json", to_json(report));
  std::vector<std::pair<std::string, PrecisionReport>> rows;
  for (const auto& a : report.arms) {
    rows.emplace_back(a.name, a.evaluation.report);
    write_metrics_csv(out / (a.name + ".metrics.csv"), a.metrics);
    const auto& r = a.evaluation.report;
    ctx.out << a.name << ": arousal " << (r.precision[1] ? format_double(*r.precision[1]) : "-") << ", valence "
            << (r.precision[0] ? format_double(*r.precision[0]) : "-") << ", average "
            << (r.average ? format_double(*r.average) : "-") << '\n';
  }
  write_precision_csv(out / "precision.csv", rows);
  RunManifest m{"ablate", config_hash(to_json(cfg)), cfg.seed, {data.string()}, {out.string()}, "", 0};
  if (!config_path.empty()) m.inputs.push_back(config_path);
  ctx.finish(m, manifest_path(out, true));
  return 0;
}

int cmd_assess(const Context& ctx, const fs::path& model_dir, const fs::path& session_dir, const fs::path& out,
               double window_minutes) {
  AffectModel model = load_model(model_dir);
  std::vector<SessionData> sessions;
  const std::string name = session_dir.filename().string();
  if (fs::exists(session_dir / (name + "_ECG.csv"))) {
    sessions.push_back(load_session(session_dir));
  } else if (fs::is_directory(session_dir)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(session_dir))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) sessions.push_back(load_session(d));
  }
  if (sessions.empty()) throw IngestError("no session found at " + session_dir.string());
  const auto report = therapy_assess(model, sessions, window_minutes);
  write_json_file(out, to_json(report));
  write_quadrant_csv(sidecar(out, ".quadrants.csv"), report);
  for (const auto& w : report.warnings) ctx.err << "warning: " << w << '\n';
  for (const auto& a : report.patients)
    ctx.out << a.patient << ": " << quadrant_name(a.pre.quadrant) << " -> " << quadrant_name(a.post.quadrant)
            << ", movement " << format_double(a.movement) << '\n';
  ctx.out << "Q2->Q4 transitions: " << report.q2_to_q4 << " of " << report.patients.size() << '\n';
  ctx.finish({"assess", config_hash(to_json(model.config)), model.params.seed(),
              {model_dir.string(), session_dir.string()}, {out.string(), sidecar(out, ".quadrants.csv").string()}, "", 0},
             manifest_path(out, false));
  return 0;
}

int cmd_gradcheck(const Context& ctx, const std::string& op, bool list) {
  if (list) {
    for (const auto& n : gradcheck_case_names()) ctx.out << n << '\n';
    return 0;
  }
  bool ok = true;
  double worst = 0.0;
  for (const auto& r : run_gradcheck_suite(op, ctx.seed.value_or(7))) {
    char line[128];
    std::snprintf(line, sizeof line, "%-22s max_rel_err %.3e  (%zu elements)  ", r.name.c_str(), r.max_rel_error,
                  r.elements);
    ctx.out << line << ctx.colored(r.passed() ? "ok" : "FAIL", r.passed()) << '\n';
    ok = ok && r.passed();
    worst = std::max(worst, r.max_rel_error);
  }
  char line[96];
  std::snprintf(line, sizeof line, "worst %.3e, tolerance %.0e\n", worst, kGradcheckTolerance);
  ctx.out << line;
  return ok ? 0 : 2;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal affect estimation toolkit", "biomm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(BIOMM_VERSION));
  std::optional<std::uint64_t> seed;
  bool plain = false;
  app.add_option("--seed", seed, "Override the RNG seed of the config");
  app.add_flag("--plain", plain, "Plain output without color");

  std::string spec, in, out_path, config, data, model, bae, variant, session, op;
  bool per_frame = false, all = false, parallel = false, list = false;
  double window = 15.0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--spec", spec, "Synthesis spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Synchronize sessions into a sample file");
  pre->add_option("--in", in, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", out_path, "Sample file")->required();
  pre->add_option("--config", config, "Pipeline options (JSON)")->check(CLI::ExistingFile);

  auto* pbae = app.add_subcommand("pretrain-bae", "Pretrain one auto-encoder per bio channel");
  pbae->add_option("--data", data, "Sample file")->required()->check(CLI::ExistingFile);
  pbae->add_option("--config", config, "Training config (JSON)")->check(CLI::ExistingFile);
  pbae->add_option("--out", out_path, "Output directory")->required();

  auto* enc = app.add_subcommand("encode-bae", "Write latent vectors of every sample");
  enc->add_option("--bae", bae, "Pretrained auto-encoder directory")->required()->check(CLI::ExistingDirectory);
  enc->add_option("--data", data, "Sample file")->required()->check(CLI::ExistingFile);
  enc->add_option("--out", out_path, "Latent CSV")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--variant", variant, "Fusion variant")->required()->check(CLI::IsMember({"bmmn", "bae1", "bae2"}));
  tr->add_option("--data", data, "Sample file")->required()->check(CLI::ExistingFile);
  tr->add_option("--config", config, "Training config (JSON)")->check(CLI::ExistingFile);
  tr->add_option("--out", out_path, "Model directory")->required();
  tr->add_option("--bae", bae, "Pretrained auto-encoder directory (bae1, bae2)");

  auto* ev = app.add_subcommand("eval", "Score a model on held-out data");
  ev->add_option("--model", model, "Model directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", data, "Sample file")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out_path, "Report (JSON)")->required();
  ev->add_flag("--per-frame", per_frame, "Score every frame instead of trial means");
  ev->add_flag("--all", all, "Score every sample, not only the model's held-out sessions");

  auto* ab = app.add_subcommand("ablate", "Bio-only / face-only / multi-modal comparison");
  ab->add_option("--data", data, "Sample file")->required()->check(CLI::ExistingFile);
  ab->add_option("--config", config, "Training config (JSON)")->check(CLI::ExistingFile);
  ab->add_option("--out", out_path, "Output directory")->required();
  ab->add_flag("--parallel", parallel, "Train the three arms concurrently");

  auto* as = app.add_subcommand("assess", "Pre/post therapy quadrant assessment");
  as->add_option("--model", model, "Model directory")->required()->check(CLI::ExistingDirectory);
  as->add_option("--session", session, "Session directory, or a directory of sessions")
      ->required()
      ->check(CLI::ExistingDirectory);
  as->add_option("--out", out_path, "Report (JSON)")->required();
  as->add_option("--window", window, "Window length in minutes")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--op", op, "Run a single case");
  gc->add_flag("--list", list, "List case names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    app.exit(e, out, err);
    if (!dynamic_cast<const CLI::CallForHelp*>(&e)) err << app.help();
    return 1;
  }

  Context ctx{out, err, seed, plain};
  try {
    if (*synth) return cmd_synth(ctx, spec, out_path);
    if (*pre) return cmd_preprocess(ctx, in, out_path, config);
    if (*pbae) return cmd_pretrain(ctx, data, config, out_path);
    if (*enc) return cmd_encode(ctx, bae, data, out_path);
    if (*tr) return cmd_train(ctx, variant, data, config, out_path, bae);
    if (*ev) return cmd_eval(ctx, model, data, out_path, per_frame, all);
    if (*ab) return cmd_ablate(ctx, data, config, out_path, parallel);
    if (*as) return cmd_assess(ctx, model, session, out_path, window);
    if (*gc) return cmd_gradcheck(ctx, op, list);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace biomm
