#include "stn/gradcheck.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "stn/rng.hpp"
#include "stn/transcribe.hpp"

namespace stn {

ToyInstance make_toy_instance(std::uint64_t seed) {
  Rng rng(seed);
  ToyInstance toy;
  toy.image = Image(8, 4);
  for (double& p : toy.image.pixels) p = rng.uniform();
  toy.targets = {static_cast<Token>(rng.below(kNumGlyphs)), static_cast<Token>(rng.below(kNumGlyphs)),
                 Token::End};
  return toy;
}

double gradient_error(double analytic, double numeric, double zero_threshold) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= zero_threshold) return diff;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

GradCheckReport gradient_check(const ModelParams& params, const LossFn& loss, const GradientFn& gradient,
                               const GradCheckOptions& options) {
  ModelParams grad = params.zeros_like();
  gradient(params, grad);
  const auto gviews = grad.views();

  ModelParams probe = params;
  auto pviews = probe.views();

  struct Entry {
    std::size_t view;
    Eigen::Index index;
  };
  std::map<std::string, std::vector<Entry>> candidates;
  for (std::size_t v = 0; v < pviews.size(); ++v) {
    if (pviews[v].kind == ParamKind::Statistic) continue;
    auto& list = candidates[std::string(pviews[v].group)];
    for (Eigen::Index k = 0; k < pviews[v].size(); ++k) list.push_back({v, k});
  }

  Rng rng(options.seed);
  GradCheckReport report;
  report.passed = true;
  for (std::string_view group : kParamGroups) {
    auto it = candidates.find(std::string(group));
    if (it == candidates.end() || it->second.empty() || options.skip_groups.count(it->first)) continue;
    GroupCheck check;
    check.group = std::string(group);
    const auto& list = it->second;
    const int n = std::min<int>(options.samples_per_group, static_cast<int>(list.size()));
    for (int s = 0; s < n; ++s) {
      const Entry e = list[rng.below(list.size())];
      double& x = pviews[e.view].data[e.index];
      const double saved = x;
      x = saved + options.step;
      const double up = loss(probe);
      x = saved - options.step;
      const double down = loss(probe);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = gviews[e.view].data[e.index];
      if (std::abs(analytic - numeric) <= options.zero_threshold) ++check.absolute;
      check.max_error = std::max(check.max_error, gradient_error(analytic, numeric, options.zero_threshold));
      ++check.coordinates;
    }
    check.passed = check.max_error < options.tolerance;
    report.passed = report.passed && check.passed;
    report.groups.push_back(check);
  }
  return report;
}

GradCheckReport gradient_check(const ModelParams& params, const ToyInstance& toy, const GradCheckOptions& options) {
  LossFn loss = [&](const ModelParams& p) { return sequence_nll(p, toy.image, toy.targets); };
  GradientFn gradient = [&](const ModelParams& p, ModelParams& g) {
    return sequence_nll_gradient(p, toy.image, toy.targets, g);
  };
  GradCheckOptions scoped = options;
  scoped.skip_groups.insert("value");  // the critic does not enter the transcription loss
  return gradient_check(params, loss, gradient, scoped);
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  os.precision(3);
  for (const auto& g : report.groups)
    os << (g.passed ? "PASS " : "FAIL ") << g.group << " coords=" << g.coordinates << " absolute=" << g.absolute
       << " max_err=" << std::scientific << g.max_error << std::defaultfloat << '\n';
  os << (report.passed ? "all groups pass" : "gradient check FAILED") << '\n';
  return os.str();
}

}  // namespace stn
