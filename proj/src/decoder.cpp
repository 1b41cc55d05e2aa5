#include "stn/decoder.hpp"

#include "stn/errors.hpp"

namespace stn {

DecoderParams DecoderParams::create(int context_size) {
  DecoderParams p;
  p.embedding = Mat::Zero(kEmbeddingSize, kVocabSize);
  p.history = GruCell(kEmbeddingSize, kHistorySize);
  p.head = Mlp2(kHistorySize + context_size + 3, kHeadHidden, kOutputSize);
  return p;
}

Vec history_step(const Vec& h_prev, Token y_prev, const DecoderParams& params, GruCell::Cache* cache) {
  const int id = token_id(y_prev);
  if (id < 0 || id >= params.embedding.cols()) throw UnknownTokenError("#" + std::to_string(id));
  return params.history.forward(params.embedding.col(id), h_prev, cache);
}

Vec output_logits(const Vec& state_features, const DecoderParams& params, Mlp2::Cache* cache) {
  return params.head.forward(state_features, cache);
}

Vec output_distribution(const Vec& h, const Vec& context, const SpotlightHandle& s, GridDims dims,
                        const DecoderParams& params) {
  return softmax(output_logits(concat(h, context, normalized_handle(s, dims)), params));
}

}  // namespace stn
