#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "biomm/graph.hpp"

namespace biomm {

/// Argmax bookkeeping of a max-pool: for every pooled element, the flat
/// index of its source inside the pre-pool tensor.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> source;
};

struct Pooled {
  Var out;
  PoolIndices indices;
};

// Shapes: 1D activations are [C x L], 2D are [C x H x W]; kernels carry
// [C_out x C_in x K...]. Convolutions are cross-correlations (no flip).

/// Output length floor((L - K) / stride) + 1.
Var conv1d_valid(Var input, Var kernels, std::size_t stride = 1);
/// Transposed convolution, output length L + K - 1; stride must be 1.
Var conv1d_full(Var input, Var kernels, std::size_t stride = 1);
Var conv2d_valid(Var input, Var kernels, std::size_t stride = 1);
/// Adds bias[c] to every element of channel c.
Var add_channel_bias(Var input, Var bias);

Var relu(Var input);

/// Window max over the last axis; ties resolve to the lowest index.
Pooled maxpool1d(Var input, std::size_t window, std::size_t stride);
Pooled maxpool2d(Var input, std::size_t window, std::size_t stride);
/// Scatters (adds) each value to its recorded source; zeros elsewhere.
Var unpool1d(Var input, const PoolIndices& indices, std::size_t target_len);

/// weight [M x N] * input [N] + bias [M].
Var linear(Var input, Var weight, Var bias);

Var reshape(Var input, Shape shape);
Var flatten(Var input);
Var concat(std::span<const Var> parts, std::size_t axis = 0);
Var add(Var a, Var b);
Var scale(Var a, double factor);

/// Mean of squared differences, as a scalar node.
Var mse_loss(Var prediction, Var target);

}  // namespace biomm
