#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stn/training.hpp"
#include "stn/transcribe.hpp"

namespace stn {

struct RefineConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int iterations = 200;
  double gamma = 0.99;
  double advantage_epsilon = 1e-8;
  std::uint64_t seed = 0;
};

// R_t = sum_{k >= t} gamma^(k - t) r_k.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

struct Episode {
  std::size_t image_index = 0;
  SampledEpisode sample;          // actions, log-probabilities, per-step state
  std::vector<double> rewards;    // zero except the last step
  std::vector<double> returns;
  double terminal_reward = 0.0;   // -1 when the output does not compile
  bool compiled = false;
};

Episode rollout_episode(const ModelParams& params, const FeatureGrid& features, const Image& ground_image,
                        std::uint64_t rng_seed, double gamma = 0.99, std::size_t image_index = 0);
Episode rollout_episode(const ModelParams& params, const Image& image, const Image& ground_image,
                        std::uint64_t rng_seed, double gamma = 0.99);

double value_estimate(const Vec& state_features, const ValueParams& params, Mlp2::Cache* cache = nullptr);

// (v - target)^2 and its gradient, accumulated into `grad`.
double value_loss_gradient(const Vec& state_features, double target, const ValueParams& params, ValueParams& grad);

// (x - mean) / sqrt(var + epsilon) over the whole span.
std::vector<double> standardize(std::span<const double> values, double epsilon);

// One policy step as seen by the actor-critic objective.
struct PolicyStep {
  const Vec* probs;
  int action;
  double ret;
  const Vec* state_features;
};

struct ActorCriticTerms {
  std::vector<Vec> grad_logits;       // d(policy loss)/d(logits), per step
  ValueParams value_grad;
  std::vector<double> advantages;     // standardized
  std::vector<double> raw_advantages; // R_t - v_t
  double value_loss = 0.0;            // mean (v_t - R_t)^2
  double policy_loss = 0.0;
};

// Policy loss  -(1/episodes) sum_t A_t log pi(a_t)  with A_t the standardized
// R_t - v_t and v_t treated as a constant; value loss mean (v_t - R_t)^2.
ActorCriticTerms actor_critic_terms(std::span<const PolicyStep> steps, const ValueParams& value,
                                    std::size_t episodes, double advantage_epsilon);

struct UpdateDiagnostics {
  double mean_reward = 0.0;
  double mean_advantage = 0.0;  // before standardization
  double value_loss = 0.0;
  double compile_rate = 0.0;
};

inline const std::set<std::string> kRefineFrozen = {"encoder", "history"};

// One Adam step on the control, head and value groups.
UpdateDiagnostics actor_critic_update(ParameterStore& store, std::span<const Episode> episodes,
                                      const RefineConfig& config);

struct RewardPoint {
  int iteration = 0;
  double mean_reward = 0.0;
  double compile_rate = 0.0;
  double value_loss = 0.0;
};

std::string reward_curve_csv(const std::vector<RewardPoint>& curve);

struct RefineResult {
  ParameterStore store;  // best mean-reward snapshot
  ParameterStore last;
  std::vector<RewardPoint> curve;
  int best_iteration = 0;
};

using IterationCallback = std::function<void(const RewardPoint&)>;

RefineResult refine_loop(ParameterStore store, const Dataset& data, const RefineConfig& config,
                         const std::optional<std::filesystem::path>& curve_path = std::nullopt,
                         const IterationCallback& on_iteration = {});

// Two-armed bandit: one step, arm 0 pays 1.0 and arm 1 pays 0.0. Trains a
// softmax policy plus a value network with the same actor-critic terms.
struct BanditResult {
  double good_arm_probability = 0.0;
  int updates = 0;
};
BanditResult run_bandit(std::uint64_t seed, int updates, int batch_size = 16, double learning_rate = 1e-2);

}  // namespace stn
