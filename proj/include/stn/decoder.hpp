#pragma once

#include "stn/control.hpp"
#include "stn/glyphlang.hpp"
#include "stn/layers.hpp"

namespace stn {

inline constexpr int kEmbeddingSize = 16;
inline constexpr int kHeadHidden = 64;
// h ⊕ sc ⊕ normalized handle
inline constexpr int kStateFeatureSize = kHistorySize + kFeatureDepth + 3;

struct DecoderParams {
  Mat embedding;   // kEmbeddingSize x kVocabSize, one column per token
  GruCell history; // θ_h
  Mlp2 head;       // θ_d: affine -> tanh -> affine -> kOutputSize logits

  static DecoderParams create(int context_size = kFeatureDepth);
};

// h_t = GRU(embed(y_{t-1}), h_{t-1}).
Vec history_step(const Vec& h_prev, Token y_prev, const DecoderParams& params,
                 GruCell::Cache* cache = nullptr);

Vec output_logits(const Vec& state_features, const DecoderParams& params, Mlp2::Cache* cache = nullptr);

// Softmax(d(h ⊕ sc ⊕ s)), with s in normalized form.
Vec output_distribution(const Vec& h, const Vec& context, const SpotlightHandle& s, GridDims dims,
                        const DecoderParams& params);

}  // namespace stn
