#pragma once

#include <string>
#include <string_view>

#include "stn/layers.hpp"
#include "stn/spotlight.hpp"

namespace stn {

enum class Variant { Stnm, Stnr, NoSpotlight };

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);  // "stnm" | "stnr" | "ablation-no-spotlight"

inline constexpr int kHistorySize = 64;   // h_t
inline constexpr int kPathSize = 64;      // e_t
inline constexpr int kControlHidden = 64;

// Centered handle whose radius covers the grid.
SpotlightHandle init_handle(GridDims dims);

// ((x-1)/(W'-1), (y-1)/(H'-1), sigma/max(W',H')); a unit-length axis maps to 0.
Vec normalized_handle(const SpotlightHandle& h, GridDims dims);
Vec normalization_scale(GridDims dims);

// Maps unconstrained (u, v, w) onto a valid handle:
//   x = 1 + (W'-1) logistic(u), y = 1 + (H'-1) logistic(v), sigma = 0.5 + softplus(w)
struct Squashed {
  SpotlightHandle handle;
  Vec jacobian;  // diagonal d(x, y, sigma)/d(u, v, w)
};
Squashed squash_handle(const Vec& raw, GridDims dims);

struct ControlParams {
  Variant variant = Variant::Stnr;
  Mlp2 markov;    // STNM: n(s ⊕ sc ⊕ h)
  GruCell path;   // STNR: e_t = GRU(s_{t-1}, e_{t-1})
  Dense readout;  // STNR: c(e ⊕ sc ⊕ h)

  static ControlParams create(Variant variant, int context_size = kFeatureDepth);
};

struct ControlState {
  Variant variant = Variant::Stnr;
  Vec path;  // e_{t-1}; STNR only
  SpotlightHandle last_handle;
  Vec last_context;  // sc_{t-1}
};

ControlState initial_control_state(Variant variant, const SpotlightHandle& s0, Vec sc0);

struct ControlCache {
  Vec norm_scale;
  Vec jacobian;
  Mlp2::Cache markov;
  GruCell::Cache path;
  Vec readout_input;
};

SpotlightHandle stnm_step(const ControlState& state, const Vec& history, const ControlParams& params,
                          GridDims dims, ControlCache* cache = nullptr);

struct StnrOutput {
  SpotlightHandle handle;
  Vec path;  // e_t
};
StnrOutput stnr_step(const ControlState& state, const Vec& history, const ControlParams& params,
                     GridDims dims, ControlCache* cache = nullptr);

// Dispatches on the variant and advances state.path; last_handle and
// last_context are left for the caller, which owns the spotlight.
SpotlightHandle control_step(ControlState& state, const Vec& history, const ControlParams& params,
                             GridDims dims, ControlCache* cache = nullptr);

struct ControlInputGrads {
  HandleGrad prev_handle;
  Vec prev_context;
  Vec history;
  Vec prev_path;  // STNR only
};

// `grad_path` is dL/de_t arriving from later steps (STNR; may be null).
ControlInputGrads control_backward(const ControlParams& params, const ControlCache& cache,
                                   const HandleGrad& grad_handle, const Vec* grad_path,
                                   ControlParams& grad);

}  // namespace stn
