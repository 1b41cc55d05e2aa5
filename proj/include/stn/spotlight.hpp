#pragma once

#include "stn/encoder.hpp"
#include "stn/tensor.hpp"

namespace stn {

inline constexpr double kSigmaMin = 0.5;

// Center (x, y) and radius sigma in continuous 1-based cell coordinates.
struct SpotlightHandle {
  double x = 1.0;
  double y = 1.0;
  double sigma = 1.0;

  bool operator==(const SpotlightHandle&) const = default;
};

struct GridDims {
  int width = 0;
  int height = 0;
};

bool is_valid(const SpotlightHandle& h, GridDims dims);

// I(i, j) = i and J(i, j) = j for 1 <= i <= W', 1 <= j <= H'.
struct CoordinateGrids {
  GridDims dims;
  Mat I;  // W' x H'
  Mat J;

  static CoordinateGrids make(GridDims dims);
};

// Softmax weights over grid cells; alpha(i-1, j-1) is the weight of cell
// (i, j). Column-major storage matches FeatureGrid column order.
struct WeightMap {
  Mat alpha;  // W' x H'

  GridDims dims() const { return {static_cast<int>(alpha.rows()), static_cast<int>(alpha.cols())}; }
  Eigen::Map<const Vec> flat() const { return {alpha.data(), alpha.size()}; }
};

// b = -[(I - X)^2 + (J - Y)^2] / sigma^2, evaluated elementwise on the grids.
Mat spotlight_scores(const SpotlightHandle& handle, const CoordinateGrids& grids);
// Same scores computed one cell at a time.
Mat spotlight_scores_loop(const SpotlightHandle& handle, GridDims dims);

WeightMap weight_map(const SpotlightHandle& handle, const CoordinateGrids& grids);
WeightMap uniform_weight_map(GridDims dims);

Vec context_vector(const WeightMap& weights, const FeatureGrid& features);

struct SpotlightCache {
  bool valid = false;
  bool movable = true;  // false for a fixed map; no handle gradient
  SpotlightHandle handle;
  WeightMap weights;
};

// weight_map + context_vector, recording what the backward pass needs.
Vec spotlight_forward(const SpotlightHandle& handle, const CoordinateGrids& grids,
                      const FeatureGrid& features, SpotlightCache* cache);

struct HandleGrad {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.0;
};

// Given dL/dsc, returns dL/d(handle) and, when `grad_features` is non-null,
// adds dL/dV into it (D x W'H').
HandleGrad spotlight_backward(const SpotlightCache& cache, const FeatureGrid& features,
                              const Vec& grad_context, Mat* grad_features);

}  // namespace stn
