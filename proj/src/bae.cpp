#include "biomm/bae.hpp"

#include "biomm/adam.hpp"
#include "biomm/error.hpp"
#include "biomm/rng.hpp"
#include "json_checks.hpp"

namespace biomm {

using nlohmann::json;

namespace {

std::size_t pooled(std::size_t len, std::size_t window, std::size_t stride) { return (len - window) / stride + 1; }

}  // namespace

std::vector<std::size_t> BaeConfig::encoder_chain() const {
  std::vector<std::size_t> chain;
  std::size_t len = segment_length;
  for (std::size_t i = 0; i < 3; ++i) {
    if (len < kernels[i]) throw ConfigError("bae: stage " + std::to_string(i + 1) + " kernel longer than its input");
    len = len - kernels[i] + 1;
    chain.push_back(len);
    if (len < pool_window) throw ConfigError("bae: stage " + std::to_string(i + 1) + " too short to pool");
    len = pooled(len, pool_window, pool_stride);
    chain.push_back(len);
  }
  return chain;
}

std::vector<std::size_t> BaeConfig::decoder_chain() const {
  const auto enc = encoder_chain();
  // unpool1 restores conv3's length, conv4 (full, K3) grows it, and so on.
  std::vector<std::size_t> chain;
  chain.push_back(enc[4]);
  chain.push_back(enc[4] + kernels[2] - 1);
  chain.push_back(enc[2]);
  chain.push_back(enc[2] + kernels[1] - 1);
  chain.push_back(enc[0]);
  chain.push_back(enc[0] + kernels[0] - 1);
  return chain;
}

void BaeConfig::validate() const {
  if (latent == 0) throw ConfigError("bae: latent width must be positive");
  for (std::size_t f : filters)
    if (f == 0) throw ConfigError("bae: filter counts must be positive");
  const auto enc = encoder_chain();
  const auto dec = decoder_chain();
  if (dec[1] != enc[3] || dec[3] != enc[1] || dec[5] != segment_length)
    throw ConfigError("bae: decoder chain does not mirror the encoder; check pool window/stride");
}

json to_json(const BaeConfig& c) {
  return {{"segment_length", c.segment_length}, {"kernels", c.kernels}, {"filters", c.filters},
          {"latent", c.latent},                 {"pool_window", c.pool_window}, {"pool_stride", c.pool_stride}};
}

BaeConfig bae_config_from_json(const json& j) {
  detail::reject_negative_integers(j, "bae config");
  BaeConfig c;
  try {
    c.segment_length = j.value("segment_length", c.segment_length);
    if (j.contains("kernels")) c.kernels = j.at("kernels").get<std::array<std::size_t, 3>>();
    if (j.contains("filters")) c.filters = j.at("filters").get<std::array<std::size_t, 3>>();
    c.latent = j.value("latent", c.latent);
    c.pool_window = j.value("pool_window", c.pool_window);
    c.pool_stride = j.value("pool_stride", c.pool_stride);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bae config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string bae_prefix(Channel c) { return c == Channel::ECG ? "bae.ecg" : "bae.eda"; }

BaeModel::BaeModel(std::string prefix, BaeConfig config) : prefix_(std::move(prefix)), config_(config) {
  config_.validate();
}

void BaeModel::register_params(ParamStore& store) const {
  const auto& k = config_.kernels;
  const auto& f = config_.filters;
  const std::size_t pooled3 = config_.encoder_chain()[5];
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t kernel) {
    store.add(prefix_ + name + ".w", {out, in, kernel});
    store.add(prefix_ + name + ".b", {out}, InitKind::Zero);
  };
  conv(".enc.conv1", f[0], 1, k[0]);
  conv(".enc.conv2", f[1], f[0], k[1]);
  conv(".enc.conv3", f[2], f[1], k[2]);
  store.add(prefix_ + ".enc.fc.w", {config_.latent, f[2] * pooled3});
  store.add(prefix_ + ".enc.fc.b", {config_.latent}, InitKind::Zero);
  store.add(prefix_ + ".dec.fc.w", {f[2] * pooled3, config_.latent});
  store.add(prefix_ + ".dec.fc.b", {f[2] * pooled3}, InitKind::Zero);
  conv(".dec.conv4", f[1], f[2], k[2]);
  conv(".dec.conv5", f[0], f[1], k[1]);
  conv(".dec.conv6", 1, f[0], k[0]);
}

Var BaeModel::block(Graph& g, ParamStore& store, Var x, const std::string& name, bool full) const {
  Var w = g.param(store, prefix_ + name + ".w");
  Var b = g.param(store, prefix_ + name + ".b");
  Var y = full ? conv1d_full(x, w) : conv1d_valid(x, w);
  return relu(add_channel_bias(y, b));
}

BaeModel::Encoded BaeModel::encode(Graph& g, ParamStore& store, Var segment) const {
  if (segment.shape() != Shape{1, config_.segment_length})
    throw DimensionError("bae encode: expected segment [1x" + std::to_string(config_.segment_length) + "], got " +
                         shape_string(segment.shape()));
  Encoded out;
  Var x = segment;
  static const char* names[] = {".enc.conv1", ".enc.conv2", ".enc.conv3"};
  for (std::size_t i = 0; i < 3; ++i) {
    x = block(g, store, x, names[i], false);
    out.lengths.push_back(x.shape()[1]);
    Pooled p = maxpool1d(x, config_.pool_window, config_.pool_stride);
    x = p.out;
    out.lengths.push_back(x.shape()[1]);
    out.indices[i] = std::move(p.indices);
  }
  if (out.lengths != config_.encoder_chain()) throw CorruptionError("bae encode: shape chain diverged");
  out.z = linear(flatten(x), g.param(store, prefix_ + ".enc.fc.w"), g.param(store, prefix_ + ".enc.fc.b"));
  return out;
}

Var BaeModel::decode(Graph& g, ParamStore& store, Var z, const Encoded& encoded) const {
  if (z.shape() != Shape{config_.latent})
    throw DimensionError("bae decode: expected latent [" + std::to_string(config_.latent) + "], got " +
                         shape_string(z.shape()));
  const auto& pool3_out = encoded.indices[2].output_shape;
  Var h = linear(z, g.param(store, prefix_ + ".dec.fc.w"), g.param(store, prefix_ + ".dec.fc.b"));
  h = reshape(h, pool3_out);
  std::vector<std::size_t> lengths;
  h = unpool1d(h, encoded.indices[2], encoded.indices[2].input_shape[1]);
  lengths.push_back(h.shape()[1]);
  h = block(g, store, h, ".dec.conv4", true);
  lengths.push_back(h.shape()[1]);
  h = unpool1d(h, encoded.indices[1], encoded.indices[1].input_shape[1]);
  lengths.push_back(h.shape()[1]);
  h = block(g, store, h, ".dec.conv5", true);
  lengths.push_back(h.shape()[1]);
  h = unpool1d(h, encoded.indices[0], encoded.indices[0].input_shape[1]);
  lengths.push_back(h.shape()[1]);
  h = block(g, store, h, ".dec.conv6", true);
  lengths.push_back(h.shape()[1]);
  if (lengths != config_.decoder_chain()) throw CorruptionError("bae decode: shape chain diverged");
  return h;
}

Var reconstruction_loss(Var original, Var reconstruction) { return mse_loss(reconstruction, original); }

namespace {

Tensor segment_tensor(const std::vector<double>& window) { return Tensor({1, window.size()}, window); }

}  // namespace

LatentVector encode_segment(const BaeModel& model, ParamStore& store, const BioSegment& segment) {
  Graph g;
  auto enc = model.encode(g, store, g.constant(segment_tensor(segment.window)));
  const auto v = enc.z.value().values();
  return {segment.channel, std::vector<double>(v.begin(), v.end())};
}

std::vector<double> reconstruct_segment(const BaeModel& model, ParamStore& store, const BioSegment& segment) {
  Graph g;
  auto enc = model.encode(g, store, g.constant(segment_tensor(segment.window)));
  const auto v = model.decode(g, store, enc.z, enc).value().values();
  return {v.begin(), v.end()};
}

double mean_reconstruction_loss(const BaeModel& model, ParamStore& store,
                                const std::vector<std::vector<double>>& segments) {
  double total = 0.0;
  for (const auto& s : segments) {
    Graph g;
    Var x = g.constant(segment_tensor(s));
    auto enc = model.encode(g, store, x);
    total += reconstruction_loss(x, model.decode(g, store, enc.z, enc)).value().item();
  }
  return total / static_cast<double>(segments.size());
}

PretrainResult pretrain(const BaeModel& model, ParamStore& store, const std::vector<std::vector<double>>& segments,
                        const PretrainConfig& config) {
  if (segments.empty()) throw UsageError("bae pretrain: empty dataset");
  if (config.batch_size == 0) throw ConfigError("bae pretrain: batch size must be positive");
  model.register_params(store);
  PretrainResult result;
  result.loss_curve.push_back(mean_reconstruction_loss(model, store, segments));
  AdamState adam(AdamConfig{config.lr});
  const std::vector<std::string> prefixes = {model.prefix() + "."};
  std::vector<std::size_t> order(segments.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, hash_string(model.prefix()), epoch));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      store.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        Graph g;
        Var x = g.constant(segment_tensor(segments[order[i]]));
        auto enc = model.encode(g, store, x);
        g.backward(reconstruction_loss(x, model.decode(g, store, enc.z, enc)));
      }
      store.scale_grad(1.0 / static_cast<double>(stop - start));
      adam_step(store, adam, prefixes);
    }
    result.loss_curve.push_back(mean_reconstruction_loss(model, store, segments));
  }
  return result;
}

}  // namespace biomm
