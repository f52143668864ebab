#include "biomm/gradcheck_suite.hpp"

#include <functional>
#include <utility>

#include "biomm/error.hpp"
#include "biomm/ops.hpp"
#include "biomm/rng.hpp"

namespace biomm {

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

// Loss against a fixed random target so every output element gets a
// distinct upstream gradient.
Var against_target(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return mse_loss(out, g.constant(random_tensor(out.shape(), rng)));
}

// Zero-initialized biases put ReLUs over all-zero receptive fields exactly on
// the kink, where central differences see half the slope.
void jitter_biases(ParamStore& store, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, p] : store)
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
      for (auto& v : p.value.values()) v = 0.1 * rng.normal();
}

using Case = std::pair<std::string, std::function<GradcheckResult(std::uint64_t)>>;

Case input_case(std::string name, std::vector<Shape> shapes, std::function<Var(Graph&, std::span<const Var>)> op) {
  return {name, [name, shapes, op](std::uint64_t seed) {
            Rng rng(derive_seed(seed, hash_string(name), 0));
            std::vector<Tensor> inputs;
            for (const auto& s : shapes) inputs.push_back(random_tensor(s, rng));
            return check_input_gradients(name, inputs, [&](Graph& g, std::span<const Var> in) {
              return against_target(g, op(g, in), derive_seed(seed, hash_string(name), 1));
            });
          }};
}

Case model_case(std::string name, FusionVariant variant, LossWeights weights) {
  return {name, [name, variant, weights](std::uint64_t seed) {
            AffectModel model(toy_model_config(variant), seed);
            const SyncedSample sample = toy_sample(model.config, seed);
            jitter_biases(model.params, derive_seed(seed, hash_string(name), 2));
            return check_param_gradients(name, model.params, [&](Graph& g, ParamStore&) {
              auto out = forward(g, model, sample);
              return total_loss(g, out, sample.label, weights).total;
            });
          }};
}

std::vector<Case> all_cases() {
  std::vector<Case> cases;
  cases.push_back(input_case("conv1d_valid", {{2, 11}, {3, 2, 4}},
                             [](Graph&, std::span<const Var> x) { return conv1d_valid(x[0], x[1]); }));
  cases.push_back(input_case("conv1d_valid_stride2", {{2, 12}, {3, 2, 3}},
                             [](Graph&, std::span<const Var> x) { return conv1d_valid(x[0], x[1], 2); }));
  cases.push_back(input_case("conv1d_full", {{3, 7}, {2, 3, 4}},
                             [](Graph&, std::span<const Var> x) { return conv1d_full(x[0], x[1]); }));
  cases.push_back(input_case("conv2d_valid", {{2, 6, 5}, {3, 2, 3, 2}},
                             [](Graph&, std::span<const Var> x) { return conv2d_valid(x[0], x[1]); }));
  cases.push_back(input_case("conv2d_valid_stride2", {{1, 7, 7}, {2, 1, 3, 3}},
                             [](Graph&, std::span<const Var> x) { return conv2d_valid(x[0], x[1], 2); }));
  cases.push_back(input_case("add_channel_bias", {{3, 5}, {3}},
                             [](Graph&, std::span<const Var> x) { return add_channel_bias(x[0], x[1]); }));
  cases.push_back(input_case("relu", {{4, 6}}, [](Graph&, std::span<const Var> x) { return relu(x[0]); }));
  cases.push_back(input_case("maxpool1d", {{2, 9}},
                             [](Graph&, std::span<const Var> x) { return maxpool1d(x[0], 2, 2).out; }));
  cases.push_back(input_case("maxpool1d_overlap", {{2, 9}},
                             [](Graph&, std::span<const Var> x) { return maxpool1d(x[0], 3, 1).out; }));
  cases.push_back(input_case("maxpool2d", {{2, 6, 5}},
                             [](Graph&, std::span<const Var> x) { return maxpool2d(x[0], 2, 2).out; }));
  cases.push_back(input_case("unpool1d", {{2, 4}}, [](Graph& g, std::span<const Var> x) {
    Rng rng(99);
    auto pooled = maxpool1d(g.constant(random_tensor({2, 9}, rng)), 2, 2);
    return unpool1d(x[0], pooled.indices, 9);
  }));
  cases.push_back(input_case("linear", {{5}, {3, 5}, {3}},
                             [](Graph&, std::span<const Var> x) { return linear(x[0], x[1], x[2]); }));
  cases.push_back(input_case("reshape", {{2, 6}},
                             [](Graph&, std::span<const Var> x) { return reshape(x[0], {3, 4}); }));
  cases.push_back(input_case("flatten", {{2, 3, 2}}, [](Graph&, std::span<const Var> x) { return flatten(x[0]); }));
  cases.push_back(input_case("concat", {{4}, {3}, {2}}, [](Graph&, std::span<const Var> x) { return concat(x); }));
  cases.push_back(input_case("concat_axis1", {{2, 3}, {2, 2}},
                             [](Graph&, std::span<const Var> x) { return concat(x, 1); }));
  cases.push_back(input_case("add", {{3, 4}, {3, 4}}, [](Graph&, std::span<const Var> x) { return add(x[0], x[1]); }));
  cases.push_back(input_case("scale", {{3, 4}}, [](Graph&, std::span<const Var> x) { return scale(x[0], -1.7); }));
  cases.push_back({"mse_loss", [](std::uint64_t seed) {
                     Rng rng(derive_seed(seed, hash_string("mse_loss"), 0));
                     return check_input_gradients("mse_loss", {random_tensor({7}, rng), random_tensor({7}, rng)},
                                                  [](Graph&, std::span<const Var> x) { return mse_loss(x[0], x[1]); });
                   }});
  cases.push_back({"bae", [](std::uint64_t seed) {
                     const ModelConfig cfg = toy_model_config(FusionVariant::BMMN_BAE_1);
                     ParamStore store(seed);
                     BaeModel bae("bae.ecg", cfg.bae);
                     bae.register_params(store);
                     jitter_biases(store, derive_seed(seed, hash_string("bae"), 2));
                     const SyncedSample s = toy_sample(cfg, seed);
                     return check_param_gradients("bae", store, [&](Graph& g, ParamStore& st) {
                       const auto& w = s.segment(Channel::ECG).window;
                       Var x = g.constant(Tensor({1, w.size()}, w));
                       auto enc = bae.encode(g, st, x);
                       return reconstruction_loss(x, bae.decode(g, st, enc.z, enc));
                     });
                   }});
  cases.push_back(model_case("bmmn", FusionVariant::BMMN, {}));
  cases.push_back(model_case("bmmn_bae1", FusionVariant::BMMN_BAE_1, {}));
  cases.push_back(model_case("bmmn_bae2", FusionVariant::BMMN_BAE_2, {}));
  cases.push_back(model_case("bmmn_bae2_weighted", FusionVariant::BMMN_BAE_2, {0.7, 0.3}));
  return cases;
}

}  // namespace

ModelConfig toy_model_config(FusionVariant variant) {
  ModelConfig c;
  c.variant = variant;
  c.bio.segment_length = 64;
  c.bio.kernels = {9, 5, 3, 3};
  c.bio.filters = {2, 2, 2, 2};
  c.bae.segment_length = 64;
  c.bae.kernels = {9, 5, 3};
  c.bae.filters = {3, 2, 2};
  c.bae.latent = 6;
  c.spatial.image_size = 12;
  c.spatial.filters = {2, 3};
  c.spatial.out_features = 5;
  return c;
}

SyncedSample toy_sample(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, hash_string("toy_sample"), 0));
  SyncedSample s;
  s.subject_id = "toy";
  s.session_id = "toy_t01";
  for (std::size_t c = 0; c < 2; ++c) {
    s.segments[c].channel = kChannels[c];
    s.segments[c].window.resize(cfg.bio.segment_length);
    for (auto& v : s.segments[c].window) v = rng.uniform();
  }
  Image img;
  img.height = img.width = cfg.spatial.image_size;
  img.pixels.resize(img.height * img.width);
  for (auto& v : img.pixels) v = rng.uniform();
  s.face = img;
  s.label = one_hot_label(1.0 + 8.0 * rng.uniform(), 1.0 + 8.0 * rng.uniform(), 1.0 + 8.0 * rng.uniform(),
                          rng.below(kEmotionCount));
  return s;
}

std::vector<std::string> gradcheck_case_names() {
  std::vector<std::string> names;
  for (const auto& c : all_cases()) names.push_back(c.first);
  return names;
}

std::vector<GradcheckResult> run_gradcheck_suite(const std::string& only, std::uint64_t seed) {
  std::vector<GradcheckResult> out;
  for (const auto& [name, run] : all_cases())
    if (only.empty() || only == name) out.push_back(run(seed));
  if (!only.empty() && out.empty()) throw UsageError("unknown gradcheck case '" + only + "'");
  return out;
}

}  // namespace biomm
