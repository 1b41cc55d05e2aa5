#include "stn/layers.hpp"

namespace stn {

Vec Dense::backward(const Vec& x, const Vec& dy, Dense& grad) const {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias += dy;
  return weight.transpose() * dy;
}

Vec Mlp2::forward(const Vec& x, Cache* cache) const {
  Vec a = hidden.forward(x).array().tanh();
  Vec y = output.forward(a);
  if (cache) {
    cache->input = x;
    cache->activation = std::move(a);
  }
  return y;
}

Vec Mlp2::backward(const Cache& cache, const Vec& dy, Mlp2& grad) const {
  const Vec da = output.backward(cache.activation, dy, grad.output);
  const Vec dpre = da.array() * (1.0 - cache.activation.array().square());
  return hidden.backward(cache.input, dpre, grad.hidden);
}

Vec GruCell::forward(const Vec& x, const Vec& h_prev, Cache* cache) const {
  const auto n = hidden_size();
  const Vec gx = input_weight * x + bias;
  const Vec z = logistic(Vec(gx.segment(0, n) + recurrent_weight.middleRows(0, n) * h_prev));
  const Vec r = logistic(Vec(gx.segment(n, n) + recurrent_weight.middleRows(n, n) * h_prev));
  const Vec rh = r.cwiseProduct(h_prev);
  const Vec cand = (gx.segment(2 * n, n) + recurrent_weight.middleRows(2 * n, n) * rh).array().tanh();
  Vec h = (1.0 - z.array()) * cand.array() + z.array() * h_prev.array();
  if (cache) {
    cache->input = x;
    cache->prev = h_prev;
    cache->update = z;
    cache->reset = r;
    cache->candidate = cand;
  }
  return h;
}

GruCell::InputGrads GruCell::backward(const Cache& c, const Vec& dh, GruCell& grad) const {
  const auto n = hidden_size();
  const auto& z = c.update;
  const auto& r = c.reset;
  const auto& cand = c.candidate;
  const Vec rh = r.cwiseProduct(c.prev);

  Vec dprev = dh.cwiseProduct(z);
  const Vec dcand = dh.array() * (1.0 - z.array());
  const Vec dz = dh.array() * (c.prev - cand).array();

  Vec gpre(3 * n);
  gpre.segment(2 * n, n) = dcand.array() * (1.0 - cand.array().square());
  const Vec drh = recurrent_weight.middleRows(2 * n, n).transpose() * gpre.segment(2 * n, n);
  const Vec dr = drh.cwiseProduct(c.prev);
  dprev += drh.cwiseProduct(r);
  gpre.segment(0, n) = dz.array() * z.array() * (1.0 - z.array());
  gpre.segment(n, n) = dr.array() * r.array() * (1.0 - r.array());

  grad.input_weight.noalias() += gpre * c.input.transpose();
  grad.bias += gpre;
  grad.recurrent_weight.middleRows(0, 2 * n).noalias() += gpre.segment(0, 2 * n) * c.prev.transpose();
  grad.recurrent_weight.middleRows(2 * n, n).noalias() += gpre.segment(2 * n, n) * rh.transpose();
  dprev.noalias() += recurrent_weight.middleRows(0, 2 * n).transpose() * gpre.segment(0, 2 * n);

  return {input_weight.transpose() * gpre, std::move(dprev)};
}

}  // namespace stn
