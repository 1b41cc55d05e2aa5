#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "stn/rng.hpp"
#include "stn/tensor.hpp"

namespace test {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline std::filesystem::path source_data_dir() { return STN_SOURCE_DATA_DIR; }

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stn_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline stn::Vec random_vec(stn::Rng& rng, Eigen::Index n, double scale = 1.0) {
  stn::Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

inline stn::Mat random_mat(stn::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  stn::Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// |a - n| when within 1e-8, otherwise relative.
inline double fd_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= 1e-8) return diff;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

// Central-difference derivative of f with respect to x[k].
inline double central_difference(double& x, const std::function<double()>& f, double step = 1e-5) {
  const double saved = x;
  x = saved + step;
  const double up = f();
  x = saved - step;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * step);
}

// Worst error over every coordinate of `array` against `analytic`.
template <class M>
double max_fd_error(M& array, const M& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < array.size(); ++k)
    worst = std::max(worst, fd_error(analytic.data()[k], central_difference(array.data()[k], f)));
  return worst;
}

}  // namespace test
