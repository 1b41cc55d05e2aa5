#include "stn/control.hpp"

#include <algorithm>

#include "stn/errors.hpp"

namespace stn {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Stnm: return "stnm";
    case Variant::Stnr: return "stnr";
    case Variant::NoSpotlight: return "ablation-no-spotlight";
  }
  return "?";
}

Variant variant_from_name(std::string_view name) {
  if (name == "stnm") return Variant::Stnm;
  if (name == "stnr") return Variant::Stnr;
  if (name == "ablation-no-spotlight") return Variant::NoSpotlight;
  throw Error("unknown variant '" + std::string(name) + "' (expected stnm, stnr or ablation-no-spotlight)");
}

SpotlightHandle init_handle(GridDims dims) {
  return {(dims.width + 1) / 2.0, (dims.height + 1) / 2.0, std::max(dims.width, dims.height) / 2.0};
}

Vec normalization_scale(GridDims dims) {
  Vec s(3);
  s << (dims.width > 1 ? 1.0 / (dims.width - 1) : 0.0), (dims.height > 1 ? 1.0 / (dims.height - 1) : 0.0),
      1.0 / std::max(dims.width, dims.height);
  return s;
}

Vec normalized_handle(const SpotlightHandle& h, GridDims dims) {
  const Vec s = normalization_scale(dims);
  Vec out(3);
  out << (h.x - 1.0) * s[0], (h.y - 1.0) * s[1], h.sigma * s[2];
  return out;
}

Squashed squash_handle(const Vec& raw, GridDims dims) {
  const double lu = logistic(raw[0]);
  const double lv = logistic(raw[1]);
  Squashed out;
  out.handle = {1.0 + (dims.width - 1) * lu, 1.0 + (dims.height - 1) * lv, kSigmaMin + softplus(raw[2])};
  out.jacobian.resize(3);
  out.jacobian << (dims.width - 1) * lu * (1.0 - lu), (dims.height - 1) * lv * (1.0 - lv), logistic(raw[2]);
  return out;
}

ControlParams ControlParams::create(Variant variant, int context_size) {
  ControlParams p;
  p.variant = variant;
  if (variant == Variant::Stnm) {
    p.markov = Mlp2(3 + context_size + kHistorySize, kControlHidden, 3);
  } else if (variant == Variant::Stnr) {
    p.path = GruCell(3, kPathSize);
    p.readout = Dense(kPathSize + context_size + kHistorySize, 3);
  }
  return p;
}

ControlState initial_control_state(Variant variant, const SpotlightHandle& s0, Vec sc0) {
  ControlState s;
  s.variant = variant;
  if (variant == Variant::Stnr) s.path = Vec::Zero(kPathSize);
  s.last_handle = s0;
  s.last_context = std::move(sc0);
  return s;
}

SpotlightHandle stnm_step(const ControlState& state, const Vec& history, const ControlParams& params,
                          GridDims dims, ControlCache* cache) {
  if (state.variant != Variant::Stnm) throw StateError("stnm_step on a non-STNM state");
  const Vec input = concat(normalized_handle(state.last_handle, dims), state.last_context, history);
  const Vec raw = params.markov.forward(input, cache ? &cache->markov : nullptr);
  Squashed sq = squash_handle(raw, dims);
  if (cache) {
    cache->norm_scale = normalization_scale(dims);
    cache->jacobian = std::move(sq.jacobian);
  }
  return sq.handle;
}

StnrOutput stnr_step(const ControlState& state, const Vec& history, const ControlParams& params,
                     GridDims dims, ControlCache* cache) {
  if (state.variant != Variant::Stnr) throw StateError("stnr_step on a non-STNR state");
  Vec e = params.path.forward(normalized_handle(state.last_handle, dims), state.path,
                              cache ? &cache->path : nullptr);
  Vec input = concat(e, state.last_context, history);
  Squashed sq = squash_handle(params.readout.forward(input), dims);
  if (cache) {
    cache->norm_scale = normalization_scale(dims);
    cache->jacobian = std::move(sq.jacobian);
    cache->readout_input = std::move(input);
  }
  return {sq.handle, std::move(e)};
}

SpotlightHandle control_step(ControlState& state, const Vec& history, const ControlParams& params,
                             GridDims dims, ControlCache* cache) {
  switch (state.variant) {
    case Variant::Stnm: return stnm_step(state, history, params, dims, cache);
    case Variant::Stnr: {
      StnrOutput out = stnr_step(state, history, params, dims, cache);
      state.path = std::move(out.path);
      return out.handle;
    }
    case Variant::NoSpotlight: return state.last_handle;
  }
  throw StateError("unknown control variant");
}

ControlInputGrads control_backward(const ControlParams& params, const ControlCache& cache,
                                   const HandleGrad& grad_handle, const Vec* grad_path,
                                   ControlParams& grad) {
  if (cache.jacobian.size() != 3) throw StateError("control_backward called without a cached step");
  Vec draw(3);
  draw << grad_handle.x * cache.jacobian[0], grad_handle.y * cache.jacobian[1],
      grad_handle.sigma * cache.jacobian[2];

  const Eigen::Index context_size = params.variant == Variant::Stnm
                                        ? params.markov.hidden.in_dim() - 3 - kHistorySize
                                        : params.readout.in_dim() - kPathSize - kHistorySize;
  ControlInputGrads out;
  Vec dnorm;
  if (params.variant == Variant::Stnm) {
    const Vec dinput = params.markov.backward(cache.markov, draw, grad.markov);
    dnorm = dinput.head(3);
    out.prev_context = dinput.segment(3, context_size);
    out.history = dinput.tail(kHistorySize);
  } else if (params.variant == Variant::Stnr) {
    const Vec dinput = params.readout.backward(cache.readout_input, draw, grad.readout);
    Vec de = dinput.head(kPathSize);
    if (grad_path) de += *grad_path;
    out.prev_context = dinput.segment(kPathSize, context_size);
    out.history = dinput.tail(kHistorySize);
    auto g = params.path.backward(cache.path, de, grad.path);
    dnorm = std::move(g.input);
    out.prev_path = std::move(g.prev);
  } else {
    throw StateError("control_backward for a variant without a controller");
  }
  out.prev_handle = {dnorm[0] * cache.norm_scale[0], dnorm[1] * cache.norm_scale[1],
                     dnorm[2] * cache.norm_scale[2]};
  return out;
}

}  // namespace stn
