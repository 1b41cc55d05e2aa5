#include "stn/spotlight.hpp"

#include <string>

#include "stn/errors.hpp"

namespace stn {

bool is_valid(const SpotlightHandle& h, GridDims dims) {
  return std::isfinite(h.x) && std::isfinite(h.y) && std::isfinite(h.sigma) && h.x >= 1.0 &&
         h.x <= dims.width && h.y >= 1.0 && h.y <= dims.height && h.sigma >= kSigmaMin;
}

CoordinateGrids CoordinateGrids::make(GridDims dims) {
  CoordinateGrids g;
  g.dims = dims;
  g.I.resize(dims.width, dims.height);
  g.J.resize(dims.width, dims.height);
  for (int j = 0; j < dims.height; ++j)
    for (int i = 0; i < dims.width; ++i) {
      g.I(i, j) = i + 1;
      g.J(i, j) = j + 1;
    }
  return g;
}

Mat spotlight_scores(const SpotlightHandle& handle, const CoordinateGrids& grids) {
  const auto dx = grids.I.array() - handle.x;
  const auto dy = grids.J.array() - handle.y;
  return (-(dx.square() + dy.square()) / (handle.sigma * handle.sigma)).matrix();
}

Mat spotlight_scores_loop(const SpotlightHandle& handle, GridDims dims) {
  Mat b(dims.width, dims.height);
  for (int i = 1; i <= dims.width; ++i)
    for (int j = 1; j <= dims.height; ++j) {
      const double dx = i - handle.x;
      const double dy = j - handle.y;
      b(i - 1, j - 1) = -(dx * dx + dy * dy) / (handle.sigma * handle.sigma);
    }
  return b;
}

WeightMap weight_map(const SpotlightHandle& handle, const CoordinateGrids& grids) {
  const Mat b = spotlight_scores(handle, grids);
  Mat e = (b.array() - b.maxCoeff()).exp();
  e /= e.sum();
  return WeightMap{std::move(e)};
}

WeightMap uniform_weight_map(GridDims dims) {
  const double w = 1.0 / (static_cast<double>(dims.width) * dims.height);
  return WeightMap{Mat::Constant(dims.width, dims.height, w)};
}

Vec context_vector(const WeightMap& weights, const FeatureGrid& features) {
  if (weights.alpha.rows() != features.width || weights.alpha.cols() != features.height)
    throw ShapeError("weight map is " + std::to_string(weights.alpha.rows()) + "x" +
                     std::to_string(weights.alpha.cols()) + " but the feature grid is " +
                     std::to_string(features.width) + "x" + std::to_string(features.height));
  return features.values * weights.flat();
}

Vec spotlight_forward(const SpotlightHandle& handle, const CoordinateGrids& grids,
                      const FeatureGrid& features, SpotlightCache* cache) {
  WeightMap w = weight_map(handle, grids);
  Vec sc = context_vector(w, features);
  if (cache) {
    cache->valid = true;
    cache->movable = true;
    cache->handle = handle;
    cache->weights = std::move(w);
  }
  return sc;
}

HandleGrad spotlight_backward(const SpotlightCache& cache, const FeatureGrid& features,
                              const Vec& grad_context, Mat* grad_features) {
  if (!cache.valid) throw StateError("spotlight_backward called without a cached forward pass");
  const auto alpha = cache.weights.flat();
  if (grad_features) grad_features->noalias() += grad_context * alpha.transpose();
  HandleGrad g;
  if (!cache.movable) return g;

  const Vec dalpha = features.values.transpose() * grad_context;
  const Vec db = alpha.array() * (dalpha.array() - alpha.dot(dalpha));
  const auto& h = cache.handle;
  const double s2 = h.sigma * h.sigma;
  const int w = cache.weights.dims().width;
  for (Eigen::Index n = 0; n < db.size(); ++n) {
    const double dx = static_cast<double>(n % w + 1) - h.x;
    const double dy = static_cast<double>(n / w + 1) - h.y;
    g.x += db[n] * 2.0 * dx / s2;
    g.y += db[n] * 2.0 * dy / s2;
    g.sigma += db[n] * 2.0 * (dx * dx + dy * dy) / (s2 * h.sigma);
  }
  return g;
}

}  // namespace stn
