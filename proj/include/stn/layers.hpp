#pragma once

#include "stn/tensor.hpp"

namespace stn {

// y = W x + b
struct Dense {
  Mat weight;
  Vec bias;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) : weight(Mat::Zero(out, in)), bias(Vec::Zero(out)) {}

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  Vec forward(const Vec& x) const { return weight * x + bias; }
  // Accumulates parameter gradients into `grad` and returns dL/dx.
  Vec backward(const Vec& x, const Vec& dy, Dense& grad) const;
};

// affine -> tanh -> affine
struct Mlp2 {
  Dense hidden;
  Dense output;

  Mlp2() = default;
  Mlp2(Eigen::Index in, Eigen::Index width, Eigen::Index out) : hidden(in, width), output(width, out) {}

  struct Cache {
    Vec input;
    Vec activation;
  };

  Vec forward(const Vec& x, Cache* cache = nullptr) const;
  Vec backward(const Cache& cache, const Vec& dy, Mlp2& grad) const;
};

// Gated recurrent unit:
//   z = logistic(Wz x + Uz h + bz)
//   r = logistic(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r .* h) + bn)
//   h' = (1 - z) .* n + z .* h
// Gate blocks are stacked [z; r; n] in input_weight, recurrent_weight and bias.
struct GruCell {
  Mat input_weight;      // 3H x I
  Mat recurrent_weight;  // 3H x H
  Vec bias;              // 3H

  GruCell() = default;
  GruCell(Eigen::Index in, Eigen::Index hidden_size)
      : input_weight(Mat::Zero(3 * hidden_size, in)),
        recurrent_weight(Mat::Zero(3 * hidden_size, hidden_size)),
        bias(Vec::Zero(3 * hidden_size)) {}

  Eigen::Index hidden_size() const { return recurrent_weight.cols(); }
  Eigen::Index input_size() const { return input_weight.cols(); }

  struct Cache {
    Vec input;
    Vec prev;
    Vec update;  // z
    Vec reset;   // r
    Vec candidate;  // n
  };

  Vec forward(const Vec& x, const Vec& h_prev, Cache* cache = nullptr) const;

  struct InputGrads {
    Vec input;
    Vec prev;
  };
  InputGrads backward(const Cache& cache, const Vec& dh, GruCell& grad) const;
};

}  // namespace stn
