#pragma once

#include <span>
#include <vector>

#include "stn/model.hpp"
#include "stn/rng.hpp"

namespace stn {

inline constexpr int kMaxSteps = 24;

// Everything one decode step computes, kept for backpropagation and for
// the critic's state features.
struct StepRecord {
  Token input = Token::Start;  // y_{t-1}
  GruCell::Cache history;
  Vec h;
  ControlCache control;
  SpotlightHandle handle;
  SpotlightCache spotlight;
  Vec context;
  Vec state_features;  // h ⊕ sc ⊕ normalized handle
  Mlp2::Cache head;
  Vec probs;
};

struct Trace {
  GridDims dims;
  CoordinateGrids grids;
  FeatureGrid features;
  EncoderCache encoder;
  SpotlightCache initial_spotlight;  // s_0 and its weights, for sc_0
  std::vector<StepRecord> steps;
};

struct DecoderState {
  Vec h;
  ControlState control;
  int t = 1;
  bool finished = false;
};

// Encodes the image (caching activations when asked) and prepares s_0, sc_0.
Trace begin_trace(const ModelParams& params, const Image& image, bool cache_encoder,
                  NormStatistics* stats = nullptr);
// Starts from precomputed features; the encoder cannot be backpropagated.
Trace begin_trace(const ModelParams& params, FeatureGrid features);

DecoderState initial_state(const ModelParams& params, const Trace& trace);

// Runs one step on y_{t-1}, appends its record to the trace and returns it.
const StepRecord& decode_step(const ModelParams& params, Trace& trace, DecoderState& state, Token prev);

// Appends END; throws UnknownTokenError on a sentinel inside the body.
TokenSequence with_end(std::span<const Token> body);

// Teacher-forced negative log-likelihood. `targets` must end with END.
double sequence_nll(const ModelParams& params, const Image& image, std::span<const Token> targets);
double teacher_forced(const ModelParams& params, Trace& trace, std::span<const Token> targets);

struct BackwardScope {
  bool encoder = true;
  bool history = true;
};

// Backpropagates per-step logit gradients through the whole trace,
// accumulating into `grad`.
void backward_trace(const ModelParams& params, const Trace& trace, std::span<const Vec> grad_logits,
                    ModelParams& grad, BackwardScope scope = {});

// Loss plus gradients for one image/sequence pair.
double sequence_nll_gradient(const ModelParams& params, const Image& image, std::span<const Token> targets,
                             ModelParams& grad, NormStatistics* stats = nullptr, BackwardScope scope = {});

struct DecodeResult {
  TokenSequence tokens;  // every emitted token, END included when emitted
  std::vector<SpotlightHandle> handles;
  std::vector<WeightMap> weights;

  TokenSequence body() const;  // tokens without the trailing END
};

DecodeResult greedy_decode(const ModelParams& params, const Image& image);
DecodeResult greedy_decode(const ModelParams& params, const FeatureGrid& features);

struct SampledEpisode {
  Trace trace;
  TokenSequence actions;  // END included when emitted
  std::vector<double> log_probs;

  TokenSequence body() const;
};

SampledEpisode sample_decode(const ModelParams& params, const Image& image, Rng& rng);
SampledEpisode sample_decode(const ModelParams& params, const FeatureGrid& features, Rng& rng);

int sample_index(const Vec& probs, Rng& rng);

}  // namespace stn
