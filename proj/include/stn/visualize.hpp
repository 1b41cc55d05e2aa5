#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stn/transcribe.hpp"

namespace stn {

// Weight map rescaled linearly so its minimum is 0 and its maximum 255.
Image weight_heatmap(const WeightMap& weights);

// Nearest-neighbour upsampling of the heat map to the image size, blended
// 50/50 over the image.
Image spotlight_overlay(const Image& image, const WeightMap& weights);

// File-name safe token label ("{" -> "lbrace", "</s>" -> "end", ...).
std::string token_file_label(Token t);

struct TrajectoryStep {
  Token token;
  SpotlightHandle handle;
};

struct Visualization {
  DecodeResult decode;
  std::vector<std::filesystem::path> overlays;
  std::filesystem::path trajectory;
};

// Writes step_NNN_<token>.pgm per decode step and tokens.txt.
Visualization visualize_spotlights(const ModelParams& params, const Image& image,
                                   const std::filesystem::path& out_dir);

std::vector<TrajectoryStep> read_trajectory(const std::filesystem::path& path);

}  // namespace stn
