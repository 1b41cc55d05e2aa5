#include "stn/transcribe.hpp"

#include <cmath>

#include "stn/errors.hpp"

namespace stn {

namespace {

void seed_initial(const ModelParams& params, Trace& trace) {
  trace.dims = {trace.features.width, trace.features.height};
  trace.grids = CoordinateGrids::make(trace.dims);
  if (params.variant == Variant::NoSpotlight) {
    trace.initial_spotlight = {true, false, init_handle(trace.dims), uniform_weight_map(trace.dims)};
  } else {
    spotlight_forward(init_handle(trace.dims), trace.grids, trace.features, &trace.initial_spotlight);
  }
}

TokenSequence strip_end(const TokenSequence& tokens) {
  TokenSequence out = tokens;
  if (!out.empty() && out.back() == Token::End) out.pop_back();
  return out;
}

}  // namespace

Trace begin_trace(const ModelParams& params, const Image& image, bool cache_encoder, NormStatistics* stats) {
  Trace trace;
  trace.features = encode(image, params.encoder, cache_encoder ? &trace.encoder : nullptr, stats);
  seed_initial(params, trace);
  return trace;
}

Trace begin_trace(const ModelParams& params, FeatureGrid features) {
  Trace trace;
  trace.features = std::move(features);
  seed_initial(params, trace);
  return trace;
}

DecoderState initial_state(const ModelParams& params, const Trace& trace) {
  DecoderState s;
  s.h = Vec::Zero(params.decoder.history.hidden_size());
  s.control = initial_control_state(params.variant, trace.initial_spotlight.handle,
                                    context_vector(trace.initial_spotlight.weights, trace.features));
  return s;
}

const StepRecord& decode_step(const ModelParams& params, Trace& trace, DecoderState& state, Token prev) {
  if (state.finished) throw StateError("decode_step on a finished episode");
  StepRecord& r = trace.steps.emplace_back();
  r.input = prev;
  r.h = history_step(state.h, prev, params.decoder, &r.history);
  if (params.variant == Variant::NoSpotlight) {
    r.handle = trace.initial_spotlight.handle;
    r.spotlight = trace.initial_spotlight;
    r.context = state.control.last_context;
  } else {
    r.handle = control_step(state.control, r.h, params.control, trace.dims, &r.control);
    r.context = spotlight_forward(r.handle, trace.grids, trace.features, &r.spotlight);
  }
  r.state_features = concat(r.h, r.context, normalized_handle(r.handle, trace.dims));
  r.probs = softmax(output_logits(r.state_features, params.decoder, &r.head));

  state.h = r.h;
  state.control.last_handle = r.handle;
  state.control.last_context = r.context;
  ++state.t;
  return r;
}

TokenSequence with_end(std::span<const Token> body) {
  TokenSequence out;
  out.reserve(body.size() + 1);
  for (Token t : body) {
    if (t == Token::End || t == Token::Start) throw UnknownTokenError(std::string(token_name(t)));
    out.push_back(t);
  }
  out.push_back(Token::End);
  return out;
}

double teacher_forced(const ModelParams& params, Trace& trace, std::span<const Token> targets) {
  if (targets.empty() || targets.back() != Token::End)
    throw Error("teacher-forced targets must end with </s>");
  DecoderState state = initial_state(params, trace);
  double loss = 0.0;
  Token prev = Token::Start;
  for (Token y : targets) {
    if (token_id(y) >= kOutputSize) throw UnknownTokenError(std::string(token_name(y)));
    const StepRecord& r = decode_step(params, trace, state, prev);
    loss -= std::log(r.probs[token_id(y)]);
    prev = y;
  }
  return loss;
}

double sequence_nll(const ModelParams& params, const Image& image, std::span<const Token> targets) {
  Trace trace = begin_trace(params, image, false);
  return teacher_forced(params, trace, targets);
}

void backward_trace(const ModelParams& params, const Trace& trace, std::span<const Vec> grad_logits,
                    ModelParams& grad, BackwardScope scope) {
  if (grad_logits.size() != trace.steps.size())
    throw ShapeError("backward_trace: one logit gradient per step is required");
  if (scope.encoder && !trace.encoder.valid)
    throw StateError("backward_trace: encoder activations were not cached");

  const auto n_hist = params.decoder.history.hidden_size();
  const auto n_ctx = trace.features.depth();
  const bool controlled = params.variant != Variant::NoSpotlight;
  const Vec norm_scale = normalization_scale(trace.dims);

  Mat dfeatures = Mat::Zero(trace.features.values.rows(), trace.features.values.cols());
  Vec dh_next = Vec::Zero(n_hist);
  Vec dcontext_next = Vec::Zero(n_ctx);
  HandleGrad dhandle_next;
  Vec dpath_next;
  if (params.variant == Variant::Stnr) dpath_next = Vec::Zero(kPathSize);

  for (std::size_t k = trace.steps.size(); k-- > 0;) {
    const StepRecord& r = trace.steps[k];
    const Vec dfeat = params.decoder.head.backward(r.head, grad_logits[k], grad.decoder.head);
    Vec dh = dfeat.head(n_hist) + dh_next;
    Vec dcontext = dfeat.segment(n_hist, n_ctx) + dcontext_next;
    const Vec dnorm = dfeat.tail(3);
    HandleGrad dhandle{dhandle_next.x + dnorm[0] * norm_scale[0], dhandle_next.y + dnorm[1] * norm_scale[1],
                       dhandle_next.sigma + dnorm[2] * norm_scale[2]};

    const HandleGrad spot = spotlight_backward(r.spotlight, trace.features, dcontext, &dfeatures);
    if (controlled) {
      dhandle.x += spot.x;
      dhandle.y += spot.y;
      dhandle.sigma += spot.sigma;
      ControlInputGrads cg = control_backward(params.control, r.control, dhandle,
                                              params.variant == Variant::Stnr ? &dpath_next : nullptr,
                                              grad.control);
      dh += cg.history;
      dcontext_next = std::move(cg.prev_context);
      dhandle_next = cg.prev_handle;
      if (params.variant == Variant::Stnr) dpath_next = std::move(cg.prev_path);
    } else {
      dcontext_next.setZero();
      dhandle_next = {};
    }

    if (scope.history) {
      GruCell::InputGrads hg = params.decoder.history.backward(r.history, dh, grad.decoder.history);
      grad.decoder.embedding.col(token_id(r.input)) += hg.input;
      dh_next = std::move(hg.prev);
    }
  }
  // sc_0 enters the first control step; s_0 is a constant.
  if (controlled) spotlight_backward(trace.initial_spotlight, trace.features, dcontext_next, &dfeatures);

  if (scope.encoder) encode_backward(trace.encoder, dfeatures, params.encoder, grad.encoder);
}

double sequence_nll_gradient(const ModelParams& params, const Image& image, std::span<const Token> targets,
                             ModelParams& grad, NormStatistics* stats, BackwardScope scope) {
  Trace trace = begin_trace(params, image, scope.encoder, stats);
  const double loss = teacher_forced(params, trace, targets);
  std::vector<Vec> dlogits(trace.steps.size());
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    dlogits[k] = trace.steps[k].probs;
    dlogits[k][token_id(targets[k])] -= 1.0;
  }
  backward_trace(params, trace, dlogits, grad, scope);
  return loss;
}

TokenSequence DecodeResult::body() const { return strip_end(tokens); }
TokenSequence SampledEpisode::body() const { return strip_end(actions); }

namespace {

DecodeResult greedy_from(const ModelParams& params, Trace trace) {
  DecoderState state = initial_state(params, trace);
  DecodeResult out;
  Token prev = Token::Start;
  while (!state.finished) {
    const StepRecord& r = decode_step(params, trace, state, prev);
    Eigen::Index best = 0;
    r.probs.maxCoeff(&best);  // first maximum: ties go to the lowest id
    prev = static_cast<Token>(best);
    out.tokens.push_back(prev);
    out.handles.push_back(r.handle);
    out.weights.push_back(r.spotlight.weights);
    if (prev == Token::End || state.t > kMaxSteps) state.finished = true;
  }
  return out;
}

SampledEpisode sample_from(const ModelParams& params, Trace trace, Rng& rng) {
  SampledEpisode ep;
  DecoderState state = initial_state(params, trace);
  Token prev = Token::Start;
  while (!state.finished) {
    const StepRecord& r = decode_step(params, trace, state, prev);
    const int a = sample_index(r.probs, rng);
    prev = static_cast<Token>(a);
    ep.actions.push_back(prev);
    ep.log_probs.push_back(std::log(r.probs[a]));
    if (prev == Token::End || state.t > kMaxSteps) state.finished = true;
  }
  ep.trace = std::move(trace);
  return ep;
}

}  // namespace

int sample_index(const Vec& probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = static_cast<int>(i);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

DecodeResult greedy_decode(const ModelParams& params, const Image& image) {
  return greedy_from(params, begin_trace(params, image, false));
}

DecodeResult greedy_decode(const ModelParams& params, const FeatureGrid& features) {
  return greedy_from(params, begin_trace(params, features));
}

SampledEpisode sample_decode(const ModelParams& params, const Image& image, Rng& rng) {
  return sample_from(params, begin_trace(params, image, false), rng);
}

SampledEpisode sample_decode(const ModelParams& params, const FeatureGrid& features, Rng& rng) {
  return sample_from(params, begin_trace(params, features), rng);
}

}  // namespace stn
