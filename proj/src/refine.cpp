#include "stn/refine.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stn/errors.hpp"

namespace stn {

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    running = rewards[k] + gamma * running;
    out[k] = running;
  }
  return out;
}

Episode rollout_episode(const ModelParams& params, const FeatureGrid& features, const Image& ground_image,
                        std::uint64_t rng_seed, double gamma, std::size_t image_index) {
  Rng rng(rng_seed);
  Episode ep;
  ep.image_index = image_index;
  ep.sample = sample_decode(params, features, rng);
  ep.terminal_reward = episode_reward(ep.sample.body(), ground_image);
  ep.compiled = ep.terminal_reward >= 0.0;
  ep.rewards.assign(ep.sample.actions.size(), 0.0);
  ep.rewards.back() = ep.terminal_reward;
  ep.returns = compute_returns(ep.rewards, gamma);
  return ep;
}

Episode rollout_episode(const ModelParams& params, const Image& image, const Image& ground_image,
                        std::uint64_t rng_seed, double gamma) {
  return rollout_episode(params, encode(image, params.encoder), ground_image, rng_seed, gamma);
}

double value_estimate(const Vec& state_features, const ValueParams& params, Mlp2::Cache* cache) {
  return params.net.forward(state_features, cache)[0];
}

double value_loss_gradient(const Vec& state_features, double target, const ValueParams& params, ValueParams& grad) {
  Mlp2::Cache cache;
  const double v = value_estimate(state_features, params, &cache);
  Vec dv(1);
  dv[0] = 2.0 * (v - target);
  params.net.backward(cache, dv, grad.net);
  return (v - target) * (v - target);
}

std::vector<double> standardize(std::span<const double> values, double epsilon) {
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double var = 0.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + epsilon);
  for (double& x : out) x = (x - mean) * inv;
  return out;
}

ActorCriticTerms actor_critic_terms(std::span<const PolicyStep> steps, const ValueParams& value,
                                    std::size_t episodes, double advantage_epsilon) {
  ActorCriticTerms out;
  out.value_grad = ValueParams{Mlp2(value.net.hidden.in_dim(), value.net.hidden.out_dim(), 1)};
  if (steps.empty()) return out;

  const double n_steps = static_cast<double>(steps.size());
  out.raw_advantages.reserve(steps.size());
  for (const PolicyStep& s : steps) {
    Mlp2::Cache cache;
    const double v = value_estimate(*s.state_features, value, &cache);
    out.raw_advantages.push_back(s.ret - v);
    out.value_loss += (v - s.ret) * (v - s.ret) / n_steps;
    Vec dv(1);
    dv[0] = 2.0 * (v - s.ret) / n_steps;
    value.net.backward(cache, dv, out.value_grad.net);
  }
  out.advantages = standardize(out.raw_advantages, advantage_epsilon);

  const double inv_episodes = 1.0 / static_cast<double>(std::max<std::size_t>(episodes, 1));
  out.grad_logits.reserve(steps.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const PolicyStep& s = steps[k];
    const double a = out.advantages[k];
    out.policy_loss -= a * std::log((*s.probs)[s.action]) * inv_episodes;
    Vec g = *s.probs * (a * inv_episodes);
    g[s.action] -= a * inv_episodes;
    out.grad_logits.push_back(std::move(g));
  }
  return out;
}

UpdateDiagnostics actor_critic_update(ParameterStore& store, std::span<const Episode> episodes,
                                      const RefineConfig& config) {
  for (const auto& group : kRefineFrozen)
    if (!store.is_frozen(group)) throw StateError("actor_critic_update requires the " + group + " group frozen");

  UpdateDiagnostics diag;
  if (episodes.empty()) return diag;

  std::vector<PolicyStep> steps;
  for (const Episode& ep : episodes) {
    const auto& records = ep.sample.trace.steps;
    for (std::size_t t = 0; t < records.size(); ++t)
      steps.push_back({&records[t].probs, token_id(ep.sample.actions[t]), ep.returns[t], &records[t].state_features});
    diag.mean_reward += ep.terminal_reward;
    diag.compile_rate += ep.compiled ? 1.0 : 0.0;
  }
  diag.mean_reward /= static_cast<double>(episodes.size());
  diag.compile_rate /= static_cast<double>(episodes.size());

  ActorCriticTerms terms = actor_critic_terms(steps, store.params.value, episodes.size(), config.advantage_epsilon);
  diag.value_loss = terms.value_loss;
  diag.mean_advantage =
      std::accumulate(terms.raw_advantages.begin(), terms.raw_advantages.end(), 0.0) /
      static_cast<double>(std::max<std::size_t>(terms.raw_advantages.size(), 1));
  if (!std::isfinite(terms.value_loss) || !std::isfinite(terms.policy_loss))
    throw NonFiniteLoss(static_cast<std::size_t>(store.adam_step), "actor-critic loss");

  ModelParams grad = store.params.zeros_like();
  std::size_t offset = 0;
  for (const Episode& ep : episodes) {
    const std::size_t n = ep.sample.trace.steps.size();
    backward_trace(store.params, ep.sample.trace, std::span<const Vec>(terms.grad_logits.data() + offset, n), grad,
                   BackwardScope{false, false});
    offset += n;
  }
  grad.value = std::move(terms.value_grad);
  adam_update(store, grad, config.learning_rate);
  return diag;
}

std::string reward_curve_csv(const std::vector<RewardPoint>& curve) {
  std::ostringstream os;
  os << "iteration,mean_reward,compile_rate,value_loss\n";
  os.precision(10);
  for (const auto& p : curve)
    os << p.iteration << ',' << p.mean_reward << ',' << p.compile_rate << ',' << p.value_loss << '\n';
  return os.str();
}

RefineResult refine_loop(ParameterStore store, const Dataset& data, const RefineConfig& config,
                         const std::optional<std::filesystem::path>& curve_path,
                         const IterationCallback& on_iteration) {
  if (data.empty()) throw Error("refine_loop: empty dataset");
  store.frozen.insert(kRefineFrozen.begin(), kRefineFrozen.end());
  store.config["refine_learning_rate"] = std::to_string(config.learning_rate);
  store.config["refine_iterations"] = std::to_string(config.iterations);
  store.config["refine_seed"] = std::to_string(config.seed);

  // Same split as the supervised run that produced the checkpoint.
  TrainConfig supervised = TrainConfig::from_key_values([&] {
    KeyValues kv;
    for (const auto& key : {"seed", "validation_fraction"})
      if (store.config.count(key)) kv[key] = store.config.at(key);
    return kv;
  }());
  const Split split = split_validation(data.size(), supervised.validation_fraction, supervised.seed);

  // The encoder is frozen, so its features are computed once.
  std::vector<FeatureGrid> features(data.size());
  for (std::size_t i : split.train) features[i] = encode(data[i].image, store.params.encoder);

  Rng rng(config.seed * 0xD1B54A32D192ED03ULL + 3);
  RefineResult result;
  result.store = store;
  double best = -std::numeric_limits<double>::infinity();

  auto write_curve = [&]() {
    if (!curve_path) return;
    std::ofstream out(*curve_path);
    if (!out) throw Error("cannot write reward curve to " + curve_path->string());
    out << reward_curve_csv(result.curve);
  };

  for (int it = 0; it < config.iterations; ++it) {
    std::vector<Episode> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));
    for (int b = 0; b < config.batch_size; ++b) {
      const std::size_t idx = split.train[rng.below(split.train.size())];
      batch.push_back(rollout_episode(store.params, features[idx], data[idx].image, rng.bits(), config.gamma, idx));
    }
    const ParameterStore before = store;
    const UpdateDiagnostics d = actor_critic_update(store, batch, config);
    RewardPoint point{it, d.mean_reward, d.compile_rate, d.value_loss};
    result.curve.push_back(point);
    if (d.mean_reward > best) {
      best = d.mean_reward;
      result.store = before;
      result.best_iteration = it;
    }
    write_curve();
    if (on_iteration) on_iteration(point);
  }
  if (config.iterations == 0) write_curve();
  result.last = store;
  return result;
}

BanditResult run_bandit(std::uint64_t seed, int updates, int batch_size, double learning_rate) {
  Rng rng(seed);
  Vec logits = Vec::Zero(2);
  Vec logits_m = Vec::Zero(2), logits_v = Vec::Zero(2);

  // Only the critic of this store is trained.
  ParameterStore value_store = ParameterStore::create(Variant::NoSpotlight);
  glorot_init(value_store, seed);
  value_store.frozen = {"encoder", "history", "head", "control"};
  const Vec state = Vec::Ones(kStateFeatureSize);

  for (int u = 0; u < updates; ++u) {
    const Vec probs = softmax(logits);
    std::vector<int> actions(static_cast<std::size_t>(batch_size));
    std::vector<double> returns(static_cast<std::size_t>(batch_size));
    std::vector<PolicyStep> steps;
    for (int b = 0; b < batch_size; ++b) {
      actions[b] = sample_index(probs, rng);
      returns[b] = actions[b] == 0 ? 1.0 : 0.0;
    }
    for (int b = 0; b < batch_size; ++b) steps.push_back({&probs, actions[b], returns[b], &state});
    ActorCriticTerms terms = actor_critic_terms(steps, value_store.params.value, steps.size(), 1e-8);

    Vec g = Vec::Zero(2);
    for (const Vec& gl : terms.grad_logits) g += gl;
    adam_apply(Eigen::Map<Vec>(logits.data(), 2), Eigen::Map<const Vec>(g.data(), 2),
               Eigen::Map<Vec>(logits_m.data(), 2), Eigen::Map<Vec>(logits_v.data(), 2), u + 1, learning_rate);

    ModelParams grad = value_store.params.zeros_like();
    grad.value = std::move(terms.value_grad);
    adam_update(value_store, grad, learning_rate);
  }
  return {softmax(logits)[0], updates};
}

}  // namespace stn
