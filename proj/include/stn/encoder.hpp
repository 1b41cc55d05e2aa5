#pragma once

#include <array>
#include <string_view>

#include "stn/glyphlang.hpp"
#include "stn/tensor.hpp"

namespace stn {

inline constexpr int kFeatureDepth = 32;
inline constexpr int kDownsample = 4;
inline constexpr double kNormEpsilon = 1e-5;

// W' x H' grid of D-dimensional cell vectors. Column (j-1)*W' + (i-1) holds
// cell (i, j) in 1-based cell coordinates, i horizontal.
struct FeatureGrid {
  int width = 0;
  int height = 0;
  Mat values;  // D x (width * height)

  Eigen::Index depth() const { return values.rows(); }
  Eigen::Index cells() const { return values.cols(); }
  auto cell(int i, int j) const { return values.col(static_cast<Eigen::Index>(j - 1) * width + (i - 1)); }
};

// 3x3 convolution (pad 1) followed by per-channel normalization with running
// statistics. Kernel columns are ordered (ky, kx, input channel).
struct ConvNorm {
  int stride = 1;
  Mat kernel;  // Cout x 9*Cin
  Vec bias;
  Vec scale;
  Vec offset;
  Vec running_mean;
  Vec running_var;

  ConvNorm() = default;
  ConvNorm(int in_channels, int out_channels, int stride);

  int in_channels() const { return static_cast<int>(kernel.cols() / 9); }
  int out_channels() const { return static_cast<int>(kernel.rows()); }
};

struct EncoderParams {
  ConvNorm stem;   // 1 -> 16
  ConvNorm down1;  // 16 -> 32, stride 2
  ConvNorm res1a, res1b;
  ConvNorm down2;  // 32 -> 32, stride 2
  ConvNorm res2a, res2b;

  static EncoderParams create();

  static constexpr std::array<std::string_view, 7> kLayerNames = {
      "stem", "down1", "res1a", "res1b", "down2", "res2a", "res2b"};
  std::array<ConvNorm*, 7> layers() {
    return {&stem, &down1, &res1a, &res1b, &down2, &res2a, &res2b};
  }
  std::array<const ConvNorm*, 7> layers() const {
    return {&stem, &down1, &res1a, &res1b, &down2, &res2a, &res2b};
  }
};

// Per-channel sums of pre-normalization activations, gathered while training.
struct NormStatistics {
  std::array<Vec, 7> sum;
  std::array<Vec, 7> sum_sq;
  std::array<double, 7> count{};

  void reset(const EncoderParams& params);
  void merge(const NormStatistics& other);
};

// Moves running statistics toward the gathered batch statistics.
void update_running_statistics(EncoderParams& params, const NormStatistics& stats, double momentum);

struct ConvCache {
  int in_width = 0, in_height = 0, out_width = 0, out_height = 0;
  Mat columns;     // im2col of the input
  Mat normalized;  // (z - mean) / sqrt(var + eps)
};

struct EncoderCache {
  bool valid = false;
  std::array<ConvCache, 7> conv;
  Mat a1, a2, t1, a3, a4, t2, a5;  // post-activation maps
};

// Requires width and height to be positive multiples of 4.
FeatureGrid encode(const Image& image, const EncoderParams& params, EncoderCache* cache = nullptr,
                   NormStatistics* stats = nullptr);

// Accumulates parameter gradients into `grad`; returns dL/dimage (1 x W*H,
// row-major pixel order). Throws StateError without a cached forward pass.
Mat encode_backward(const EncoderCache& cache, const Mat& grad_features, const EncoderParams& params,
                    EncoderParams& grad);

}  // namespace stn
