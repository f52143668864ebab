#include "biomm/ops.hpp"

#include <algorithm>
#include <memory>
#include <string>

#include "biomm/error.hpp"

namespace biomm {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void expect_rank(const Var& v, std::size_t rank, const char* op, const char* what) {
  if (v.shape().size() != rank)
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(v.shape()));
}

void expect_axis(std::size_t got, std::size_t want, const char* op, const char* axis) {
  if (got != want)
    throw DimensionError(std::string(op) + ": axis '" + axis + "' mismatch, expected " + std::to_string(want) +
                         " got " + std::to_string(got));
}

}  // namespace

Var conv1d_valid(Var input, Var kernels, std::size_t stride) {
  constexpr const char* op = "conv1d_valid";
  expect_rank(input, 2, op, "input");
  expect_rank(kernels, 3, op, "kernels");
  if (stride == 0) throw UsageError("conv1d_valid: stride must be >= 1");
  const std::size_t c_in = input.shape()[0], len = input.shape()[1];
  const std::size_t c_out = kernels.shape()[0], k = kernels.shape()[2];
  expect_axis(kernels.shape()[1], c_in, op, "in_channels");
  if (len < k)
    throw DimensionError("conv1d_valid: axis 'length' " + std::to_string(len) + " shorter than kernel " +
                         std::to_string(k));
  const std::size_t out_len = (len - k) / stride + 1;

  const double* x = input.value().data();
  const double* w = kernels.value().data();
  Tensor out({c_out, out_len});
  double* y = out.data();
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < k; ++j) {
        const double wv = w[(o * c_in + c) * k + j];
        const double* xr = x + c * len + j;
        double* yr = y + o * out_len;
        if (stride == 1) {
          axpy(wv, xr, yr, out_len);
        } else {
          for (std::size_t t = 0; t < out_len; ++t) yr[t] += wv * xr[t * stride];
        }
      }

  Var parents[] = {input, kernels};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    Graph& g = *input.graph();
    const double* xv = input.value().data();
    const double* wv = kernels.value().data();
    if (input.requires_grad()) {
      double* dx = g.grad_accumulator(input).data();
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const double wj = wv[(o * c_in + c) * k + j];
            const double* dyr = dy.data() + o * out_len;
            double* dxr = dx + c * len + j;
            if (stride == 1) {
              axpy(wj, dyr, dxr, out_len);
            } else {
              for (std::size_t t = 0; t < out_len; ++t) dxr[t * stride] += wj * dyr[t];
            }
          }
    }
    if (kernels.requires_grad()) {
      double* dw = g.grad_accumulator(kernels).data();
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t j = 0; j < k; ++j) {
            const double* dyr = dy.data() + o * out_len;
            const double* xr = xv + c * len + j;
            double s = 0;
            if (stride == 1) {
              s = dot(dyr, xr, out_len);
            } else {
              for (std::size_t t = 0; t < out_len; ++t) s += dyr[t] * xr[t * stride];
            }
            dw[(o * c_in + c) * k + j] += s;
          }
    }
  });
}

Var conv1d_full(Var input, Var kernels, std::size_t stride) {
  constexpr const char* op = "conv1d_full";
  if (stride != 1) throw UnsupportedError("conv1d_full: only stride 1 is supported, got " + std::to_string(stride));
  expect_rank(input, 2, op, "input");
  expect_rank(kernels, 3, op, "kernels");
  const std::size_t c_in = input.shape()[0], len = input.shape()[1];
  const std::size_t c_out = kernels.shape()[0], k = kernels.shape()[2];
  expect_axis(kernels.shape()[1], c_in, op, "in_channels");
  const std::size_t out_len = len + k - 1;

  const double* x = input.value().data();
  const double* w = kernels.value().data();
  Tensor out({c_out, out_len});
  double* y = out.data();
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < k; ++j) axpy(w[(o * c_in + c) * k + j], x + c * len, y + o * out_len + j, len);

  Var parents[] = {input, kernels};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    Graph& g = *input.graph();
    const double* xv = input.value().data();
    const double* wv = kernels.value().data();
    if (input.requires_grad()) {
      double* dx = g.grad_accumulator(input).data();
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t j = 0; j < k; ++j)
            axpy(wv[(o * c_in + c) * k + j], dy.data() + o * out_len + j, dx + c * len, len);
    }
    if (kernels.requires_grad()) {
      double* dw = g.grad_accumulator(kernels).data();
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t j = 0; j < k; ++j)
            dw[(o * c_in + c) * k + j] += dot(dy.data() + o * out_len + j, xv + c * len, len);
    }
  });
}

Var conv2d_valid(Var input, Var kernels, std::size_t stride) {
  constexpr const char* op = "conv2d_valid";
  expect_rank(input, 3, op, "input");
  expect_rank(kernels, 4, op, "kernels");
  if (stride == 0) throw UsageError("conv2d_valid: stride must be >= 1");
  const std::size_t c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t c_out = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
  expect_axis(kernels.shape()[1], c_in, op, "in_channels");
  if (h < kh) throw DimensionError("conv2d_valid: axis 'height' shorter than kernel");
  if (w < kw) throw DimensionError("conv2d_valid: axis 'width' shorter than kernel");
  const std::size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;

  const double* x = input.value().data();
  const double* wt = kernels.value().data();
  Tensor out({c_out, oh, ow});
  double* y = out.data();
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) {
          const double wv = wt[((o * c_in + c) * kh + a) * kw + b];
          for (std::size_t i = 0; i < oh; ++i) {
            const double* xr = x + (c * h + i * stride + a) * w + b;
            double* yr = y + (o * oh + i) * ow;
            if (stride == 1) {
              axpy(wv, xr, yr, ow);
            } else {
              for (std::size_t j = 0; j < ow; ++j) yr[j] += wv * xr[j * stride];
            }
          }
        }

  Var parents[] = {input, kernels};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    Graph& g = *input.graph();
    const double* xv = input.value().data();
    const double* wv = kernels.value().data();
    double* dx = input.requires_grad() ? g.grad_accumulator(input).data() : nullptr;
    double* dw = kernels.requires_grad() ? g.grad_accumulator(kernels).data() : nullptr;
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t a = 0; a < kh; ++a)
          for (std::size_t b = 0; b < kw; ++b) {
            const std::size_t widx = ((o * c_in + c) * kh + a) * kw + b;
            double s = 0;
            for (std::size_t i = 0; i < oh; ++i) {
              const double* dyr = dy.data() + (o * oh + i) * ow;
              const std::size_t xoff = (c * h + i * stride + a) * w + b;
              if (stride == 1) {
                if (dx) axpy(wv[widx], dyr, dx + xoff, ow);
                if (dw) s += dot(dyr, xv + xoff, ow);
              } else {
                for (std::size_t j = 0; j < ow; ++j) {
                  if (dx) dx[xoff + j * stride] += wv[widx] * dyr[j];
                  s += dyr[j] * xv[xoff + j * stride];
                }
              }
            }
            if (dw) dw[widx] += s;
          }
  });
}

Var add_channel_bias(Var input, Var bias) {
  if (input.shape().empty()) throw DimensionError("add_channel_bias: input must have a channel axis");
  expect_rank(bias, 1, "add_channel_bias", "bias");
  const std::size_t channels = input.shape()[0];
  expect_axis(bias.shape()[0], channels, "add_channel_bias", "channels");
  const std::size_t inner = input.size() / channels;
  Tensor out = input.value();
  const double* b = bias.value().data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] += b[c];

  Var parents[] = {input, bias};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    Graph& g = *input.graph();
    if (input.requires_grad()) axpy(1.0, dy.data(), g.grad_accumulator(input).data(), dy.size());
    if (bias.requires_grad()) {
      double* db = g.grad_accumulator(bias).data();
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < inner; ++i) db[c] += dy[c * inner + i];
    }
  });
}

Var relu(Var input) {
  Tensor out = input.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  Var parents[] = {input};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    const double* x = input.value().data();
    double* dx = input.graph()->grad_accumulator(input).data();
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (x[i] > 0.0) dx[i] += dy[i];
  });
}

namespace {

Var scatter_back(Var input, Tensor out, std::shared_ptr<const std::vector<std::size_t>> source) {
  Var parents[] = {input};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    double* dx = input.graph()->grad_accumulator(input).data();
    const auto& src = *source;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[src[i]] += dy[i];
  });
}

}  // namespace

Pooled maxpool1d(Var input, std::size_t window, std::size_t stride) {
  expect_rank(input, 2, "maxpool1d", "input");
  if (window == 0 || stride == 0) throw UsageError("maxpool1d: window and stride must be >= 1");
  const std::size_t channels = input.shape()[0], len = input.shape()[1];
  if (len < window)
    throw DimensionError("maxpool1d: axis 'length' " + std::to_string(len) + " shorter than window " +
                         std::to_string(window));
  const std::size_t out_len = (len - window) / stride + 1;
  const double* x = input.value().data();
  Tensor out({channels, out_len});
  auto source = std::make_shared<std::vector<std::size_t>>(channels * out_len);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = c * len + t * stride;
      for (std::size_t j = 1; j < window; ++j) {
        const std::size_t idx = c * len + t * stride + j;
        if (x[idx] > x[best]) best = idx;
      }
      out[c * out_len + t] = x[best];
      (*source)[c * out_len + t] = best;
    }
  PoolIndices indices{input.shape(), out.shape(), *source};
  return {scatter_back(input, std::move(out), source), std::move(indices)};
}

Pooled maxpool2d(Var input, std::size_t window, std::size_t stride) {
  expect_rank(input, 3, "maxpool2d", "input");
  if (window == 0 || stride == 0) throw UsageError("maxpool2d: window and stride must be >= 1");
  const std::size_t channels = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  if (h < window) throw DimensionError("maxpool2d: axis 'height' shorter than window");
  if (w < window) throw DimensionError("maxpool2d: axis 'width' shorter than window");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  const double* x = input.value().data();
  Tensor out({channels, oh, ow});
  auto source = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (c * h + i * stride) * w + j * stride;
        for (std::size_t a = 0; a < window; ++a)
          for (std::size_t b = 0; b < window; ++b) {
            const std::size_t idx = (c * h + i * stride + a) * w + j * stride + b;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (c * oh + i) * ow + j;
        out[o] = x[best];
        (*source)[o] = best;
      }
  PoolIndices indices{input.shape(), out.shape(), *source};
  return {scatter_back(input, std::move(out), source), std::move(indices)};
}

Var unpool1d(Var input, const PoolIndices& indices, std::size_t target_len) {
  if (input.shape() != indices.output_shape)
    throw UsageError("unpool1d: stale indices, input " + shape_string(input.shape()) + " vs recorded " +
                     shape_string(indices.output_shape));
  if (indices.input_shape.size() != 2 || indices.input_shape[1] != target_len)
    throw UsageError("unpool1d: target length " + std::to_string(target_len) + " differs from recorded pre-pool shape " +
                     shape_string(indices.input_shape));
  const std::size_t channels = indices.input_shape[0];
  Tensor out({channels, target_len});
  const auto& src = indices.source;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] >= out.size())
      throw CorruptionError("unpool1d: index " + std::to_string(src[i]) + " outside target of " +
                            std::to_string(out.size()) + " elements");
    out[src[i]] += input.value()[i];
  }
  auto source = std::make_shared<const std::vector<std::size_t>>(src);
  Var parents[] = {input};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    double* dx = input.graph()->grad_accumulator(input).data();
    for (std::size_t i = 0; i < source->size(); ++i) dx[i] += dy[(*source)[i]];
  });
}

Var linear(Var input, Var weight, Var bias) {
  expect_rank(weight, 2, "linear", "weight");
  expect_rank(bias, 1, "linear", "bias");
  const std::size_t m = weight.shape()[0], n = weight.shape()[1];
  if (input.size() != n || input.shape().size() != 1)
    throw DimensionError("linear: axis 'features' mismatch, expected [" + std::to_string(n) + "] got " +
                         shape_string(input.shape()));
  expect_axis(bias.shape()[0], m, "linear", "outputs");
  const double* x = input.value().data();
  const double* w = weight.value().data();
  Tensor out = bias.value();
  for (std::size_t i = 0; i < m; ++i) out[i] += dot(w + i * n, x, n);

  Var parents[] = {input, weight, bias};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    Graph& g = *input.graph();
    if (input.requires_grad()) {
      double* dx = g.grad_accumulator(input).data();
      const double* wv = weight.value().data();
      for (std::size_t i = 0; i < m; ++i) axpy(dy[i], wv + i * n, dx, n);
    }
    if (weight.requires_grad()) {
      double* dw = g.grad_accumulator(weight).data();
      const double* xv = input.value().data();
      for (std::size_t i = 0; i < m; ++i) axpy(dy[i], xv, dw + i * n, n);
    }
    if (bias.requires_grad()) axpy(1.0, dy.data(), g.grad_accumulator(bias).data(), m);
  });
}

Var reshape(Var input, Shape shape) {
  Tensor out = input.value().reshaped(std::move(shape));
  Var parents[] = {input};
  return input.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    axpy(1.0, dy.data(), input.graph()->grad_accumulator(input).data(), dy.size());
  });
}

Var flatten(Var input) { return reshape(input, Shape{input.size()}); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch " + shape_string(s));
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d])
        throw DimensionError("concat: axis " + std::to_string(d) + " mismatch, " + shape_string(s) + " vs " +
                             shape_string(first));
    out_shape[axis] += s[axis];
    widths.push_back(s[axis] * inner);
  }
  const std::size_t row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * widths[p], widths[p], out.data() + o * row + offset);
    offset += widths[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph()->record(std::move(out), inputs, [=](std::span<const double> dy) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (inputs[p].requires_grad()) {
        double* dx = inputs[p].graph()->grad_accumulator(inputs[p]).data();
        for (std::size_t o = 0; o < outer; ++o) axpy(1.0, dy.data() + o * row + off, dx + o * widths[p], widths[p]);
      }
      off += widths[p];
    }
  });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    for (const Var& v : {a, b})
      if (v.requires_grad()) axpy(1.0, dy.data(), v.graph()->grad_accumulator(v).data(), dy.size());
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [=](std::span<const double> dy) {
    axpy(factor, dy.data(), a.graph()->grad_accumulator(a).data(), dy.size());
  });
}

Var mse_loss(Var prediction, Var target) {
  if (prediction.shape() != target.shape())
    throw DimensionError("mse_loss: shape mismatch " + shape_string(prediction.shape()) + " vs " +
                         shape_string(target.shape()));
  const std::size_t n = prediction.size();
  const double* p = prediction.value().data();
  const double* t = target.value().data();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  Var parents[] = {prediction, target};
  return prediction.graph()->record(Tensor::scalar(s / static_cast<double>(n)), parents,
                                    [=](std::span<const double> dy) {
                                      const double* pv = prediction.value().data();
                                      const double* tv = target.value().data();
                                      const double k = 2.0 * dy[0] / static_cast<double>(n);
                                      if (prediction.requires_grad()) {
                                        double* dp = prediction.graph()->grad_accumulator(prediction).data();
                                        for (std::size_t i = 0; i < n; ++i) dp[i] += k * (pv[i] - tv[i]);
                                      }
                                      if (target.requires_grad()) {
                                        double* dt = target.graph()->grad_accumulator(target).data();
                                        for (std::size_t i = 0; i < n; ++i) dt[i] -= k * (pv[i] - tv[i]);
                                      }
                                    });
}

}  // namespace biomm
