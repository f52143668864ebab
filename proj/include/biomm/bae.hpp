#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "biomm/graph.hpp"
#include "biomm/ops.hpp"
#include "biomm/signal.hpp"

namespace biomm {

/// Encoder: three conv(valid) + ReLU + maxpool stages, then FC to the latent.
/// Decoder mirrors it: FC, then unpool (encoder argmax) + full conv + ReLU.
struct BaeConfig {
  std::size_t segment_length = kSegmentLength;
  std::array<std::size_t, 3> kernels = {200, 100, 50};
  std::array<std::size_t, 3> filters = {16, 8, 4};
  std::size_t latent = 128;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  /// Lengths after conv1, pool1, conv2, pool2, conv3, pool3.
  std::vector<std::size_t> encoder_chain() const;
  /// Lengths after conv4, unpool2, conv5, unpool3, conv6, preceded by unpool1.
  std::vector<std::size_t> decoder_chain() const;
  void validate() const;
};

nlohmann::json to_json(const BaeConfig& c);
BaeConfig bae_config_from_json(const nlohmann::json& j);

struct LatentVector {
  Channel channel = Channel::ECG;
  std::vector<double> z;
};

/// Parameter naming and graph construction for one per-channel auto-encoder.
/// Weights live in a ParamStore under `<prefix>.enc.*` / `<prefix>.dec.*`.
class BaeModel {
 public:
  BaeModel(std::string prefix, BaeConfig config);

  void register_params(ParamStore& store) const;
  const std::string& prefix() const noexcept { return prefix_; }
  const BaeConfig& config() const noexcept { return config_; }

  struct Encoded {
    Var z;
    std::array<PoolIndices, 3> indices;
    std::vector<std::size_t> lengths;
  };

  /// `segment` has shape [1 x segment_length].
  Encoded encode(Graph& g, ParamStore& store, Var segment) const;
  /// Returns a [1 x segment_length] reconstruction.
  Var decode(Graph& g, ParamStore& store, Var z, const Encoded& encoded) const;

 private:
  Var block(Graph& g, ParamStore& store, Var x, const std::string& name, bool full) const;
  std::string prefix_;
  BaeConfig config_;
};

std::string bae_prefix(Channel c);

Var reconstruction_loss(Var original, Var reconstruction);

/// Latent of one segment under the current parameters.
LatentVector encode_segment(const BaeModel& model, ParamStore& store, const BioSegment& segment);
std::vector<double> reconstruct_segment(const BaeModel& model, ParamStore& store, const BioSegment& segment);

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  /// Mean reconstruction MSE over the data set; entry 0 is the initial model,
  /// entry e the model after epoch e.
  std::vector<double> loss_curve;
};

/// Adam on reconstruction loss only. Registers the model's parameters first.
PretrainResult pretrain(const BaeModel& model, ParamStore& store, const std::vector<std::vector<double>>& segments,
                        const PretrainConfig& config);

double mean_reconstruction_loss(const BaeModel& model, ParamStore& store,
                                const std::vector<std::vector<double>>& segments);

}  // namespace biomm
