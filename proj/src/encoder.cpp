#include "stn/encoder.hpp"

#include <string>

#include "stn/errors.hpp"

namespace stn {

namespace {

int out_size(int in, int stride) { return (in - 1) / stride + 1; }

Mat im2col(const Mat& input, int width, int height, int stride, int out_w, int out_h) {
  const auto channels = input.rows();
  Mat cols = Mat::Zero(9 * channels, static_cast<Eigen::Index>(out_w) * out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const auto p = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= width) continue;
          cols.col(p).segment((ky * 3 + kx) * channels, channels) =
              input.col(static_cast<Eigen::Index>(iy) * width + ix);
        }
      }
    }
  }
  return cols;
}

Mat col2im(const Mat& cols, Eigen::Index channels, int width, int height, int stride, int out_w, int out_h) {
  Mat input = Mat::Zero(channels, static_cast<Eigen::Index>(width) * height);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const auto p = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= width) continue;
          input.col(static_cast<Eigen::Index>(iy) * width + ix) +=
              cols.col(p).segment((ky * 3 + kx) * channels, channels);
        }
      }
    }
  }
  return input;
}

Mat conv_forward(const ConvNorm& layer, const Mat& input, int width, int height, ConvCache* cache,
                 Vec* sum, Vec* sum_sq) {
  const int ow = out_size(width, layer.stride);
  const int oh = out_size(height, layer.stride);
  Mat cols = im2col(input, width, height, layer.stride, ow, oh);
  Mat z = layer.kernel * cols;
  z.colwise() += layer.bias;
  if (sum) {
    *sum += z.rowwise().sum();
    *sum_sq += z.array().square().matrix().rowwise().sum();
  }
  const Vec inv_std = (layer.running_var.array() + kNormEpsilon).rsqrt();
  Mat normalized = ((z.colwise() - layer.running_mean).array().colwise() * inv_std.array()).matrix();
  Mat out = (normalized.array().colwise() * layer.scale.array()).matrix();
  out.colwise() += layer.offset;
  if (cache) {
    cache->in_width = width;
    cache->in_height = height;
    cache->out_width = ow;
    cache->out_height = oh;
    cache->columns = std::move(cols);
    cache->normalized = std::move(normalized);
  }
  return out;
}

// dy is the gradient w.r.t. the normalized output (before any activation).
Mat conv_backward(const ConvNorm& layer, const ConvCache& cache, const Mat& dy, ConvNorm& grad) {
  grad.scale += (dy.array() * cache.normalized.array()).matrix().rowwise().sum();
  grad.offset += dy.rowwise().sum();
  const Vec gain = layer.scale.array() * (layer.running_var.array() + kNormEpsilon).rsqrt();
  const Mat dz = (dy.array().colwise() * gain.array()).matrix();
  grad.bias += dz.rowwise().sum();
  grad.kernel.noalias() += dz * cache.columns.transpose();
  const Mat dcols = layer.kernel.transpose() * dz;
  return col2im(dcols, layer.in_channels(), cache.in_width, cache.in_height, layer.stride,
                cache.out_width, cache.out_height);
}

Mat relu(Mat m) { return m.cwiseMax(0.0); }

Mat relu_mask(const Mat& grad, const Mat& activation) {
  return (activation.array() > 0.0).select(grad, 0.0);
}

}  // namespace

ConvNorm::ConvNorm(int in_channels, int out_channels, int stride_)
    : stride(stride_),
      kernel(Mat::Zero(out_channels, 9 * in_channels)),
      bias(Vec::Zero(out_channels)),
      scale(Vec::Ones(out_channels)),
      offset(Vec::Zero(out_channels)),
      running_mean(Vec::Zero(out_channels)),
      running_var(Vec::Ones(out_channels)) {}

EncoderParams EncoderParams::create() {
  EncoderParams p;
  p.stem = ConvNorm(1, 16, 1);
  p.down1 = ConvNorm(16, 32, 2);
  p.res1a = ConvNorm(32, 32, 1);
  p.res1b = ConvNorm(32, 32, 1);
  p.down2 = ConvNorm(32, kFeatureDepth, 2);
  p.res2a = ConvNorm(kFeatureDepth, kFeatureDepth, 1);
  p.res2b = ConvNorm(kFeatureDepth, kFeatureDepth, 1);
  return p;
}

void NormStatistics::reset(const EncoderParams& params) {
  const auto layers = params.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    sum[i] = Vec::Zero(layers[i]->out_channels());
    sum_sq[i] = Vec::Zero(layers[i]->out_channels());
    count[i] = 0.0;
  }
}

void NormStatistics::merge(const NormStatistics& other) {
  for (std::size_t i = 0; i < sum.size(); ++i) {
    sum[i] += other.sum[i];
    sum_sq[i] += other.sum_sq[i];
    count[i] += other.count[i];
  }
}

void update_running_statistics(EncoderParams& params, const NormStatistics& stats, double momentum) {
  auto layers = params.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (stats.count[i] <= 0.0) continue;
    const Vec mean = stats.sum[i] / stats.count[i];
    const Vec var = (stats.sum_sq[i] / stats.count[i] - mean.cwiseProduct(mean)).cwiseMax(0.0);
    layers[i]->running_mean = (1.0 - momentum) * layers[i]->running_mean + momentum * mean;
    layers[i]->running_var = (1.0 - momentum) * layers[i]->running_var + momentum * var;
  }
}

FeatureGrid encode(const Image& image, const EncoderParams& params, EncoderCache* cache,
                   NormStatistics* stats) {
  if (image.width <= 0 || image.height <= 0 || image.width % kDownsample != 0 ||
      image.height % kDownsample != 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height)
    throw ShapeError("encoder input must be a W x H image with W, H multiples of 4; got " +
                     std::to_string(image.width) + "x" + std::to_string(image.height));

  const auto layers = params.layers();
  EncoderCache scratch;
  EncoderCache& c = cache ? *cache : scratch;
  auto run = [&](int index, const Mat& input, int w, int h) {
    Vec* s = stats ? &stats->sum[index] : nullptr;
    Vec* s2 = stats ? &stats->sum_sq[index] : nullptr;
    Mat out = conv_forward(*layers[index], input, w, h, &c.conv[index], s, s2);
    if (stats) stats->count[index] += static_cast<double>(out.cols());
    return out;
  };

  const int w0 = image.width, h0 = image.height;
  const Mat x0 = Eigen::Map<const Mat>(image.pixels.data(), 1, static_cast<Eigen::Index>(w0) * h0);
  c.a1 = relu(run(0, x0, w0, h0));
  const int w1 = out_size(w0, 2), h1 = out_size(h0, 2);
  c.a2 = relu(run(1, c.a1, w0, h0));
  c.t1 = relu(run(2, c.a2, w1, h1));
  c.a3 = relu(run(3, c.t1, w1, h1) + c.a2);
  const int w2 = out_size(w1, 2), h2 = out_size(h1, 2);
  c.a4 = relu(run(4, c.a3, w1, h1));
  c.t2 = relu(run(5, c.a4, w2, h2));
  c.a5 = relu(run(6, c.t2, w2, h2) + c.a4);
  c.valid = cache != nullptr;

  return FeatureGrid{w2, h2, c.a5};
}

Mat encode_backward(const EncoderCache& cache, const Mat& grad_features, const EncoderParams& params,
                    EncoderParams& grad) {
  if (!cache.valid) throw StateError("encode_backward called without a cached forward pass");
  if (grad_features.rows() != cache.a5.rows() || grad_features.cols() != cache.a5.cols())
    throw ShapeError("encode_backward: gradient shape does not match the feature grid");
  const auto layers = params.layers();
  auto glayers = grad.layers();
  auto back = [&](int i, const Mat& dy) { return conv_backward(*layers[i], cache.conv[i], dy, *glayers[i]); };

  Mat g = relu_mask(grad_features, cache.a5);
  Mat da4 = g + back(5, relu_mask(back(6, g), cache.t2));
  Mat da3 = back(4, relu_mask(da4, cache.a4));
  g = relu_mask(da3, cache.a3);
  Mat da2 = g + back(2, relu_mask(back(3, g), cache.t1));
  Mat da1 = back(1, relu_mask(da2, cache.a2));
  return back(0, relu_mask(da1, cache.a1));
}

}  // namespace stn
