#include <cmath>

#include "stn/rng.hpp"
#include "stn/training.hpp"

namespace stn {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ParameterStore ParameterStore::create(Variant variant) {
  ParameterStore s;
  s.params = ModelParams::create(variant);
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  return s;
}

double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_init(ParameterStore& store, std::uint64_t seed) {
  Rng rng(seed);
  store.params.visit([&](std::string_view, const std::string& name, ParamKind kind, auto& a) {
    if (kind != ParamKind::Weight) {
      const bool one = ends_with(name, ".scale") || ends_with(name, ".running_var");
      a.setConstant(one ? 1.0 : 0.0);
      return;
    }
    Eigen::Index fan_in = a.cols(), fan_out = a.rows();
    if (ends_with(name, ".kernel")) fan_out = a.rows() * 9;
    if (name.find("gru.") != std::string::npos || name.find("path_gru.") != std::string::npos)
      fan_out = a.rows() / 3;
    const double limit = glorot_limit(fan_in, fan_out);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = rng.uniform(-limit, limit);
  });
  store.adam_m = store.params.zeros_like();
  store.adam_v = store.params.zeros_like();
  store.adam_step = 0;
}

double l2_penalty(const ModelParams& params, const std::set<std::string>& skip_groups) {
  double sum = 0.0;
  params.visit([&](std::string_view group, const std::string&, ParamKind kind, const auto& a) {
    if (kind == ParamKind::Weight && !skip_groups.count(std::string(group))) sum += a.squaredNorm();
  });
  return sum;
}

void add_l2_gradient(const ModelParams& params, ModelParams& grad, double l2,
                     const std::set<std::string>& skip_groups) {
  const auto p = params.views();
  auto g = grad.views();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].kind != ParamKind::Weight || skip_groups.count(std::string(p[i].group))) continue;
    g[i].vec() += 2.0 * l2 * p[i].vec();
  }
}

void adam_apply(Eigen::Map<Vec> param, Eigen::Map<const Vec> grad, Eigen::Map<Vec> m, Eigen::Map<Vec> v,
                std::int64_t step, double learning_rate, AdamSettings s) {
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
}

void adam_update(ParameterStore& store, ModelParams& grad, double learning_rate,
                 const std::set<std::string>& also_frozen, AdamSettings s) {
  ++store.adam_step;
  auto p = store.params.views();
  auto m = store.adam_m.views();
  auto v = store.adam_v.views();
  auto g = grad.views();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].kind == ParamKind::Statistic || store.is_frozen(p[i].group) ||
        also_frozen.count(std::string(p[i].group)))
      continue;
    adam_apply(p[i].vec(), Eigen::Map<const Vec>(g[i].data, g[i].size()), m[i].vec(), v[i].vec(),
               store.adam_step, learning_rate, s);
  }
}

}  // namespace stn
