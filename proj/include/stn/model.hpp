#pragma once

#include <array>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "stn/control.hpp"
#include "stn/decoder.hpp"
#include "stn/encoder.hpp"

namespace stn {

inline constexpr int kValueHidden = 128;

// Critic v(h ⊕ sc ⊕ s): affine -> tanh(128) -> affine -> scalar.
struct ValueParams {
  Mlp2 net;

  static ValueParams create();
};

// Weight arrays are L2-regularized; Bias arrays (biases, normalization
// scales and offsets) are trained but not regularized; Statistic arrays are
// running normalization statistics and never touched by the optimizer.
enum class ParamKind { Weight, Bias, Statistic };

inline constexpr std::array<std::string_view, 5> kParamGroups = {"encoder", "history", "head", "control",
                                                                 "value"};

template <class T>
struct BasicParamView {
  using VecMap = Eigen::Map<std::conditional_t<std::is_const_v<T>, const Vec, Vec>>;

  std::string_view group;
  std::string name;
  ParamKind kind;
  T* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  VecMap vec() const { return {data, size()}; }
};
using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

struct ModelParams {
  Variant variant = Variant::Stnr;
  EncoderParams encoder;
  DecoderParams decoder;
  ControlParams control;
  ValueParams value;

  static ModelParams create(Variant variant);
  ModelParams zeros_like() const;

  std::vector<ParamView> views();
  std::vector<ConstParamView> views() const;

  // f(group, name, kind, array) for every array, in a fixed order. Arrays
  // belonging to the inactive controller variant are skipped.
  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f);
};

template <class Self, class F>
void ModelParams::visit_impl(Self& self, F& f) {
  auto enc = self.encoder.layers();
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const std::string layer(EncoderParams::kLayerNames[i]);
    auto& l = *enc[i];
    f("encoder", layer + ".kernel", ParamKind::Weight, l.kernel);
    f("encoder", layer + ".bias", ParamKind::Bias, l.bias);
    f("encoder", layer + ".scale", ParamKind::Bias, l.scale);
    f("encoder", layer + ".offset", ParamKind::Bias, l.offset);
    f("encoder", layer + ".running_mean", ParamKind::Statistic, l.running_mean);
    f("encoder", layer + ".running_var", ParamKind::Statistic, l.running_var);
  }
  auto gru = [&](std::string_view group, const std::string& prefix, auto& cell) {
    f(group, prefix + ".input_weight", ParamKind::Weight, cell.input_weight);
    f(group, prefix + ".recurrent_weight", ParamKind::Weight, cell.recurrent_weight);
    f(group, prefix + ".bias", ParamKind::Bias, cell.bias);
  };
  auto dense = [&](std::string_view group, const std::string& prefix, auto& layer) {
    f(group, prefix + ".weight", ParamKind::Weight, layer.weight);
    f(group, prefix + ".bias", ParamKind::Bias, layer.bias);
  };
  f("history", std::string("embedding"), ParamKind::Weight, self.decoder.embedding);
  gru("history", "gru", self.decoder.history);
  dense("head", "hidden", self.decoder.head.hidden);
  dense("head", "output", self.decoder.head.output);
  if (self.variant == Variant::Stnm) {
    dense("control", "markov.hidden", self.control.markov.hidden);
    dense("control", "markov.output", self.control.markov.output);
  } else if (self.variant == Variant::Stnr) {
    gru("control", "path_gru", self.control.path);
    dense("control", "readout", self.control.readout);
  }
  dense("value", "hidden", self.value.net.hidden);
  dense("value", "output", self.value.net.output);
}

}  // namespace stn
