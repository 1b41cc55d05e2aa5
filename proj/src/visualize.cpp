#include "stn/visualize.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stn/errors.hpp"

namespace stn {

namespace fs = std::filesystem;

Image weight_heatmap(const WeightMap& w) {
  const GridDims d = w.dims();
  Image out(d.width, d.height);
  const double lo = w.alpha.minCoeff();
  const double span = w.alpha.maxCoeff() - lo;
  for (int j = 0; j < d.height; ++j)
    for (int i = 0; i < d.width; ++i) out.at(i, j) = span > 0 ? (w.alpha(i, j) - lo) / span : 0.0;
  return out;
}

Image spotlight_overlay(const Image& image, const WeightMap& weights) {
  const GridDims d = weights.dims();
  if (d.width <= 0 || d.height <= 0 || image.width % d.width != 0 || image.height % d.height != 0)
    throw ShapeError("overlay: the image is not an integer multiple of the weight grid");
  const int fx = image.width / d.width;
  const int fy = image.height / d.height;
  const Image heat = weight_heatmap(weights);
  Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      out.at(x, y) = 0.5 * std::clamp(image.at(x, y), 0.0, 1.0) + 0.5 * heat.at(x / fx, y / fy);
  return out;
}

std::string token_file_label(Token t) {
  switch (t) {
    case Token::LBrace: return "lbrace";
    case Token::RBrace: return "rbrace";
    case Token::End: return "end";
    case Token::Start: return "start";
    default: return std::string(token_name(t));
  }
}

Visualization visualize_spotlights(const ModelParams& params, const Image& image, const fs::path& out_dir) {
  Visualization vis;
  vis.decode = greedy_decode(params, image);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < vis.decode.tokens.size(); ++k) {
    char name[64];
    std::snprintf(name, sizeof name, "step_%03zu_%s.pgm", k + 1, token_file_label(vis.decode.tokens[k]).c_str());
    vis.overlays.push_back(out_dir / name);
    write_pgm(spotlight_overlay(image, vis.decode.weights[k]), vis.overlays.back());
  }
  vis.trajectory = out_dir / "tokens.txt";
  std::ofstream out(vis.trajectory);
  if (!out) throw Error("cannot write " + vis.trajectory.string());
  out << "tokens\t" << detokenize(vis.decode.body()) << '\n';
  out << "step\ttoken\tx\ty\tsigma\n";
  for (std::size_t k = 0; k < vis.decode.tokens.size(); ++k) {
    const auto& h = vis.decode.handles[k];
    char line[160];
    std::snprintf(line, sizeof line, "%zu\t%s\t%.6f\t%.6f\t%.6f\n", k + 1,
                  std::string(token_name(vis.decode.tokens[k])).c_str(), h.x, h.y, h.sigma);
    out << line;
  }
  if (!out) throw Error("write failed: " + vis.trajectory.string());
  return vis;
}

std::vector<TrajectoryStep> read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // tokens
  std::getline(in, line);  // header
  std::vector<TrajectoryStep> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t step;
    std::string token;
    TrajectoryStep s{};
    if (!(fields >> step >> token >> s.handle.x >> s.handle.y >> s.handle.sigma))
      throw Error("malformed trajectory line: " + line);
    s.token = token_from_name(token);
    out.push_back(s);
  }
  return out;
}

}  // namespace stn
