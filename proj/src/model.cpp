#include "stn/model.hpp"

namespace stn {

ValueParams ValueParams::create() { return {Mlp2(kStateFeatureSize, kValueHidden, 1)}; }

ModelParams ModelParams::create(Variant variant) {
  ModelParams p;
  p.variant = variant;
  p.encoder = EncoderParams::create();
  p.decoder = DecoderParams::create();
  p.control = ControlParams::create(variant);
  p.value = ValueParams::create();
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  z.visit([](std::string_view, const std::string&, ParamKind, auto& a) { a.setZero(); });
  return z;
}

std::vector<ParamView> ModelParams::views() {
  std::vector<ParamView> out;
  visit([&](std::string_view group, const std::string& name, ParamKind kind, auto& a) {
    out.push_back({group, name, kind, a.data(), a.rows(), a.cols()});
  });
  return out;
}

std::vector<ConstParamView> ModelParams::views() const {
  std::vector<ConstParamView> out;
  visit([&](std::string_view group, const std::string& name, ParamKind kind, const auto& a) {
    out.push_back({group, name, kind, a.data(), a.rows(), a.cols()});
  });
  return out;
}

}  // namespace stn
