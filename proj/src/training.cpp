#include "biomm/training.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "biomm/adam.hpp"
#include "biomm/error.hpp"
#include "biomm/rng.hpp"
#include "biomm/session_io.hpp"
#include "json_checks.hpp"

namespace biomm {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  weights.validate();
  if (split.person_independent && split.holdout_subjects.empty() && split.n_holdout == 0)
    throw ConfigError("person-independent split needs at least one held-out subject");
}

json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"bae_epochs", c.bae_epochs},
          {"joint_epochs", c.joint_epochs},
          {"bae_segments", c.bae_segments},
          {"seed", c.seed},
          {"weights", {{"bmmn", c.weights.bmmn}, {"bae", c.weights.bae}}},
          {"split",
           {{"holdout_subjects", c.split.holdout_subjects},
            {"n_holdout", c.split.n_holdout},
            {"person_independent", c.split.person_independent}}},
          {"per_frame_scoring", c.per_frame_scoring}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  detail::reject_negative_integers(j, "training config");
  TrainConfig c;
  try {
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.bae_epochs = j.value("bae_epochs", c.bae_epochs);
    c.joint_epochs = j.value("joint_epochs", c.joint_epochs);
    c.bae_segments = j.value("bae_segments", c.bae_segments);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weights")) {
      c.weights.bmmn = j.at("weights").value("bmmn", c.weights.bmmn);
      c.weights.bae = j.at("weights").value("bae", c.weights.bae);
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      if (s.contains("holdout_subjects")) c.split.holdout_subjects = s.at("holdout_subjects").get<std::vector<std::string>>();
      c.split.n_holdout = s.value("n_holdout", c.split.n_holdout);
      c.split.person_independent = s.value("person_independent", c.split.person_independent);
    }
    c.per_frame_scoring = j.value("per_frame_scoring", c.per_frame_scoring);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::string> subjects_of(const std::vector<SyncedSample>& samples) {
  std::set<std::string> s;
  for (const auto& x : samples) s.insert(x.subject_id);
  return {s.begin(), s.end()};
}

DataSplit split_samples(const std::vector<SyncedSample>& samples, const SplitSpec& spec) {
  if (samples.empty()) throw UsageError("split: no samples");
  const auto subjects = subjects_of(samples);
  DataSplit out;
  if (spec.person_independent) {
    if (subjects.size() < 2)
      throw ConfigError("person-independent split needs at least 2 subjects, data has " +
                        std::to_string(subjects.size()));
    std::set<std::string> held;
    if (!spec.holdout_subjects.empty()) {
      for (const auto& s : spec.holdout_subjects) {
        if (!std::binary_search(subjects.begin(), subjects.end(), s))
          throw ConfigError("held-out subject '" + s + "' not in data");
        held.insert(s);
      }
    } else {
      if (spec.n_holdout >= subjects.size())
        throw ConfigError("cannot hold out " + std::to_string(spec.n_holdout) + " of " +
                          std::to_string(subjects.size()) + " subjects");
      held.insert(subjects.end() - static_cast<std::ptrdiff_t>(spec.n_holdout), subjects.end());
    }
    if (held.size() == subjects.size()) throw ConfigError("split leaves no training subject");
    for (const auto& x : samples) (held.count(x.subject_id) ? out.eval : out.train).push_back(x);
  } else {
    std::map<std::string, std::string> last_session;
    for (const auto& x : samples) {
      auto& s = last_session[x.subject_id];
      s = std::max(s, x.session_id);
    }
    for (const auto& x : samples) (last_session[x.subject_id] == x.session_id ? out.eval : out.train).push_back(x);
    if (out.train.empty()) throw ConfigError("session split leaves no training data (one session per subject)");
  }
  out.train_subjects = subjects_of(out.train);
  out.eval_subjects = out.eval.empty() ? std::vector<std::string>{} : subjects_of(out.eval);
  return out;
}

ModelConfig resolve_model_config(ModelConfig cfg, const std::vector<SyncedSample>& samples) {
  if (cfg.uses_spatial() && cfg.spatial.mode == SpatialMode::Passthrough && cfg.spatial.passthrough_width == 0) {
    if (samples.empty()) throw UsageError("cannot infer passthrough width without samples");
    const auto* f = std::get_if<std::vector<double>>(&samples.front().face);
    if (!f) throw ConfigError("passthrough spatial mode needs feature-vector frames");
    cfg.spatial.passthrough_width = f->size();
  }
  if (cfg.uses_spatial() && cfg.spatial.mode == SpatialMode::Cnn && !samples.empty()) {
    if (const auto* img = std::get_if<Image>(&samples.front().face); img && img->height != cfg.spatial.image_size)
      throw ConfigError("face size " + std::to_string(img->height) + " does not match spatial image_size " +
                        std::to_string(cfg.spatial.image_size));
  }
  return cfg;
}

EpochMetrics evaluate_loss(AffectModel& model, const std::vector<SyncedSample>& samples, const LossWeights& weights) {
  EpochMetrics m;
  for (const auto& s : samples) {
    Graph g;
    auto out = forward(g, model, s);
    auto loss = total_loss(g, out, s.label, weights);
    m.loss_total += loss.total.value().item();
    m.loss_bmmn += loss.bmmn;
    m.loss_bae += loss.bae;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, samples.size()));
  m.loss_total /= n;
  m.loss_bmmn /= n;
  m.loss_bae /= n;
  return m;
}

namespace {

void run_stage(AffectModel& model, const std::vector<SyncedSample>& samples, const TrainConfig& cfg,
               const std::string& stage, std::size_t epochs, std::vector<EpochMetrics>& metrics) {
  auto record = [&](std::size_t epoch) {
    EpochMetrics m = evaluate_loss(model, samples, cfg.weights);
    m.stage = stage;
    m.epoch = epoch;
    metrics.push_back(m);
  };
  record(0);
  AdamState adam(AdamConfig{cfg.lr});
  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, hash_string(stage), epoch));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      model.params.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = samples[order[i]];
        Graph g;
        auto out = forward(g, model, s);
        g.backward(total_loss(g, out, s.label, cfg.weights).total);
      }
      model.params.scale_grad(1.0 / static_cast<double>(stop - start));
      adam_step(model.params, adam);
    }
    record(epoch);
  }
}

}  // namespace

std::vector<std::vector<double>> channel_segments(const std::vector<SyncedSample>& samples, Channel channel,
                                                  std::size_t limit) {
  std::vector<std::vector<double>> out;
  const std::size_t n = samples.size();
  const std::size_t take = limit == 0 ? n : std::min(limit, n);
  for (std::size_t i = 0; i < take; ++i) out.push_back(samples[i * n / take].segment(channel).window);
  return out;
}

TrainResult train(const std::vector<SyncedSample>& samples, const TrainConfig& config, const ParamStore* pretrained_bae) {
  config.validate();
  if (samples.empty()) throw UsageError("train: no training samples");
  for (const auto& s : samples)
    if (!s.labeled) throw UsageError("train: sample " + s.session_id + "#" + std::to_string(s.frame_index) + " has no label");
  ModelConfig target = resolve_model_config(config.model, samples);
  target.validate();

  TrainResult result;
  ModelConfig base = target;
  base.variant = FusionVariant::BMMN;
  const bool base_has_stream = base.uses_bio() || base.uses_spatial();

  AffectModel stage_a;
  if (base_has_stream) {
    stage_a = AffectModel(base, config.seed);
    TrainConfig a = config;
    a.weights = LossWeights{};
    run_stage(stage_a, samples, a, "bmmn", config.epochs, result.metrics);
  }
  if (target.variant == FusionVariant::BMMN) {
    result.model = std::move(stage_a);
    return result;
  }

  ParamStore bae_store(config.seed);
  for (Channel ch : kChannels) {
    BaeModel bae(bae_prefix(ch), target.bae);
    if (pretrained_bae) {
      bae.register_params(bae_store);
      for (const auto& name : bae_store.names())
        if (name.rfind(bae.prefix() + ".", 0) == 0 && !pretrained_bae->contains(name))
          throw ConfigError("pretrained auto-encoder is missing '" + name + "'");
      bae_store.copy_values_from(*pretrained_bae, bae.prefix() + ".");
      continue;
    }
    auto segs = channel_segments(samples, ch, config.bae_segments);
    PretrainConfig pc{config.bae_epochs, config.batch_size, config.lr, config.seed};
    auto curve = pretrain(bae, bae_store, segs, pc).loss_curve;
    for (std::size_t e = 0; e < curve.size(); ++e) {
      EpochMetrics m;
      m.stage = bae.prefix();
      m.epoch = e;
      m.loss_total = m.loss_bae = curve[e];
      result.metrics.push_back(m);
    }
  }

  AffectModel joint(target, config.seed);
  joint.params.copy_values_from(bae_store, "bae.");
  if (base_has_stream) {
    joint.params.copy_values_from(stage_a.params, "bio.");
    joint.params.copy_values_from(stage_a.params, "spatial.");
  }
  run_stage(joint, samples, config, "joint", config.joint_epochs, result.metrics);
  result.model = std::move(joint);
  return result;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "stage,epoch,loss_total,loss_bmmn,loss_bae\n";
  for (const auto& m : metrics)
    os << m.stage << ',' << m.epoch << ',' << format_double(m.loss_total) << ',' << format_double(m.loss_bmmn) << ','
       << format_double(m.loss_bae) << '\n';
}

}  // namespace biomm
