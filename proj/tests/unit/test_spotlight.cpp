#include <doctest.h>

#include "helpers.hpp"
#include "stn/errors.hpp"
#include "stn/spotlight.hpp"

using namespace stn;

namespace {

FeatureGrid random_grid(Rng& rng, int w, int h, int d) {
  return {w, h, test::random_mat(rng, d, static_cast<Eigen::Index>(w) * h)};
}

SpotlightHandle random_handle(Rng& rng, GridDims dims) {
  return {rng.uniform(1.0, dims.width), rng.uniform(1.0, dims.height), rng.uniform(kSigmaMin, 10.0)};
}

}  // namespace

TEST_CASE("2x2 weight map from handle (1,1,1)") {
  const auto grids = CoordinateGrids::make({2, 2});
  const Mat b = spotlight_scores({1, 1, 1}, grids);
  CHECK(b(0, 0) == 0.0);
  CHECK(b(1, 0) == -1.0);
  CHECK(b(0, 1) == -1.0);
  CHECK(b(1, 1) == -2.0);

  const double z = 1.0 + 2.0 * std::exp(-1.0) + std::exp(-2.0);
  const WeightMap w = weight_map({1, 1, 1}, grids);
  CHECK(w.alpha(0, 0) == doctest::Approx(1.0 / z).epsilon(1e-14));
  CHECK(w.alpha(1, 0) == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-14));
  CHECK(w.alpha(1, 1) == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-14));
  CHECK(w.alpha(0, 0) == doctest::Approx(0.5344).epsilon(1e-4));
  CHECK(w.alpha(1, 0) == doctest::Approx(0.1966).epsilon(1e-3));
  CHECK(w.alpha(1, 1) == doctest::Approx(0.0723).epsilon(1e-3));
}

TEST_CASE("coordinate grids are one-based") {
  const auto g = CoordinateGrids::make({3, 2});
  REQUIRE(g.I.rows() == 3);
  REQUIRE(g.I.cols() == 2);
  CHECK(g.I(0, 0) == 1.0);
  CHECK(g.I(2, 1) == 3.0);
  CHECK(g.J(2, 0) == 1.0);
  CHECK(g.J(0, 1) == 2.0);
}

TEST_CASE("huge sigma gives a uniform map") {
  for (GridDims d : {GridDims{16, 8}, GridDims{3, 5}, GridDims{1, 1}}) {
    const WeightMap w = weight_map({(d.width + 1) / 2.0, (d.height + 1) / 2.0, 1e6}, CoordinateGrids::make(d));
    const double u = 1.0 / (d.width * d.height);
    CHECK((w.alpha.array() - u).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("3x3 map centred at (2,2) is symmetric") {
  const WeightMap w = weight_map({2, 2, 1}, CoordinateGrids::make({3, 3}));
  const Mat& a = w.alpha;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != 1 || j != 1) CHECK(a(1, 1) > a(i, j));
  CHECK(a(0, 1) == a(2, 1));
  CHECK(a(0, 1) == a(1, 0));
  CHECK(a(1, 0) == a(1, 2));
  CHECK(a(0, 0) == a(2, 2));
  CHECK(a(0, 2) == a(2, 0));
  CHECK(a(0, 0) == a(0, 2));
}

TEST_CASE("matrix-form scores equal the per-cell loop exactly") {
  Rng rng(3);
  for (int n = 0; n < 200; ++n) {
    const GridDims d{rng.between(1, 16), rng.between(1, 8)};
    const SpotlightHandle h = random_handle(rng, d);
    const Mat a = spotlight_scores(h, CoordinateGrids::make(d));
    const Mat b = spotlight_scores_loop(h, d);
    REQUIRE(a.rows() == b.rows());
    CHECK((a.array() == b.array()).all());
  }
}

TEST_CASE("weight maps are normalized, positive and monotone in distance") {
  Rng rng(5);
  const GridDims d{16, 8};
  const auto grids = CoordinateGrids::make(d);
  for (int n = 0; n < 300; ++n) {
    const SpotlightHandle h = random_handle(rng, d);
    const WeightMap w = weight_map(h, grids);
    CHECK(std::abs(w.alpha.sum() - 1.0) < 1e-6);
    CHECK((w.alpha.array() > 0.0).all());
    const int i = rng.between(1, 16), j = rng.between(1, 8), u = rng.between(1, 16), v = rng.between(1, 8);
    const double di = (i - h.x) * (i - h.x) + (j - h.y) * (j - h.y);
    const double du = (u - h.x) * (u - h.x) + (v - h.y) * (v - h.y);
    if (di < du) CHECK(w.alpha(i - 1, j - 1) > w.alpha(u - 1, v - 1));
    if (di == du) CHECK(w.alpha(i - 1, j - 1) == w.alpha(u - 1, v - 1));
  }
}

TEST_CASE("validity of handles") {
  CHECK(is_valid({1, 1, 0.5}, {16, 8}));
  CHECK(is_valid({16, 8, 3}, {16, 8}));
  CHECK_FALSE(is_valid({0.99, 1, 1}, {16, 8}));
  CHECK_FALSE(is_valid({1, 8.01, 1}, {16, 8}));
  CHECK_FALSE(is_valid({1, 1, 0.49}, {16, 8}));
  CHECK_FALSE(is_valid({std::nan(""), 1, 1}, {16, 8}));
}

TEST_CASE("context vector pooling") {
  Rng rng(7);
  const Vec v0 = test::random_vec(rng, 6);
  FeatureGrid same{4, 3, v0.replicate(1, 12)};
  const WeightMap w = weight_map({2.3, 1.7, 1.2}, CoordinateGrids::make({4, 3}));
  CHECK((context_vector(w, same) - v0).cwiseAbs().maxCoeff() < 1e-14);

  const FeatureGrid g = random_grid(rng, 4, 3, 6);
  const Vec mean = g.values.rowwise().mean();
  CHECK((context_vector(uniform_weight_map({4, 3}), g) - mean).cwiseAbs().maxCoeff() < 1e-14);

  const Vec sc = context_vector(w, g);
  for (Eigen::Index k = 0; k < g.depth(); ++k) {
    CHECK(sc[k] >= g.values.row(k).minCoeff());
    CHECK(sc[k] <= g.values.row(k).maxCoeff());
  }
  CHECK_THROWS_AS(context_vector(uniform_weight_map({3, 4}), g), ShapeError);
}

TEST_CASE("narrow spotlight in the corner isolates cell (1,1)") {
  const WeightMap w = weight_map({1, 1, 0.5}, CoordinateGrids::make({16, 8}));
  // partition function of exp(-4 (i^2 + j^2)) over the 16x8 quadrant
  double z = 0.0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 8; ++j) z += std::exp(-4.0 * (i * i + j * j));
  CHECK(w.alpha(0, 0) == doctest::Approx(1.0 / z).epsilon(1e-14));
  CHECK(w.alpha(0, 0) > 0.964);
  FeatureGrid g{16, 8, Mat::Zero(4, 128)};
  g.values.col(0) << 1.0, -2.0, 3.0, 0.5;
  const Vec sc = context_vector(w, g);
  const Vec expected = w.alpha(0, 0) * g.values.col(0);
  CHECK((sc - expected).norm() <= 0.02 * expected.norm());
  CHECK((sc - g.cell(1, 1)).norm() <= (1.0 - w.alpha(0, 0)) * g.cell(1, 1).norm() + 1e-15);
}

TEST_CASE("spotlight backward matches finite differences on a 4x3 grid") {
  Rng rng(11);
  const GridDims d{4, 3};
  const auto grids = CoordinateGrids::make(d);
  FeatureGrid g = random_grid(rng, 4, 3, 5);
  SpotlightHandle h{2.2, 1.6, 1.3};
  const Vec upstream = test::random_vec(rng, 5);

  SpotlightCache cache;
  spotlight_forward(h, grids, g, &cache);
  Mat grad_v = Mat::Zero(5, 12);
  const HandleGrad hg = spotlight_backward(cache, g, upstream, &grad_v);

  auto loss = [&] { return upstream.dot(spotlight_forward(h, grids, g, nullptr)); };
  CHECK(test::fd_error(hg.x, test::central_difference(h.x, loss)) < 1e-4);
  CHECK(test::fd_error(hg.y, test::central_difference(h.y, loss)) < 1e-4);
  CHECK(test::fd_error(hg.sigma, test::central_difference(h.sigma, loss)) < 1e-4);
  CHECK(test::max_fd_error(g.values, grad_v, loss) < 1e-4);
}

TEST_CASE("spotlight backward degenerate cases") {
  const GridDims d{5, 4};
  const auto grids = CoordinateGrids::make(d);
  Rng rng(2);
  const Vec v0 = test::random_vec(rng, 3);
  const FeatureGrid same{5, 4, v0.replicate(1, 20)};
  SpotlightCache cache;
  spotlight_forward({2.5, 3.1, 0.9}, grids, same, &cache);
  const HandleGrad hg = spotlight_backward(cache, same, Vec::Ones(3), nullptr);
  CHECK(std::abs(hg.x) < 1e-14);
  CHECK(std::abs(hg.y) < 1e-14);
  CHECK(std::abs(hg.sigma) < 1e-14);

  const FeatureGrid g = random_grid(rng, 5, 4, 3);
  spotlight_forward({3, 2.5, 1e6}, grids, g, &cache);
  CHECK(std::abs(spotlight_backward(cache, g, Vec::Ones(3), nullptr).sigma) < 1e-12);

  CHECK_THROWS_AS(spotlight_backward(SpotlightCache{}, g, Vec::Ones(3), nullptr), StateError);
}
