#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "stn/glyphlang.hpp"
#include "stn/model.hpp"

namespace stn {

// 8x4 image and a 3-token target (two glyph tokens and END).
struct ToyInstance {
  Image image;
  TokenSequence targets;
};
ToyInstance make_toy_instance(std::uint64_t seed);

struct GroupCheck {
  std::string group;
  int coordinates = 0;
  int absolute = 0;        // coordinates within the absolute threshold
  double max_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  double zero_threshold = 1e-8;
  int samples_per_group = 50;
  std::uint64_t seed = 1;
  std::set<std::string> skip_groups;
};

// |a - n| when it is within zero_threshold, otherwise |a - n| / max(|a|, |n|).
double gradient_error(double analytic, double numeric, double zero_threshold = 1e-8);

using LossFn = std::function<double(const ModelParams&)>;
using GradientFn = std::function<double(const ModelParams&, ModelParams&)>;

// Central differences on sampled coordinates of every group that has
// arrays, skipping normalization statistics.
GradCheckReport gradient_check(const ModelParams& params, const LossFn& loss, const GradientFn& gradient,
                               const GradCheckOptions& options = {});

// Full sequence NLL on the toy instance.
GradCheckReport gradient_check(const ModelParams& params, const ToyInstance& toy,
                               const GradCheckOptions& options = {});

std::string format_report(const GradCheckReport& report);

}  // namespace stn
