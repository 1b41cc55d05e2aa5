#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace stn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Vec logistic(const Vec& x) { return x.unaryExpr([](double v) { return logistic(v); }); }

// Max-subtracted softmax.
inline Vec softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

inline Vec concat(const Vec& a, const Vec& b, const Vec& c) {
  Vec out(a.size() + b.size() + c.size());
  out << a, b, c;
  return out;
}

}  // namespace stn
