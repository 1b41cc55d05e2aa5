#include "stn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "stn/errors.hpp"
#include "stn/rng.hpp"
#include "stn/transcribe.hpp"

namespace stn {

namespace {

template <class T>
std::string format_number(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

KeyValues TrainConfig::to_key_values() const {
  return {
      {"learning_rate", format_number(learning_rate)},
      {"l2", format_number(l2)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"patience", std::to_string(patience)},
      {"validation_fraction", format_number(validation_fraction)},
      {"norm_momentum", format_number(norm_momentum)},
      {"seed", std::to_string(seed)},
      {"train_variant", std::string(variant_name(variant))},
      {"data_dir", data_dir},
      {"workers", std::to_string(workers)},
  };
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    try {
      if (key == "learning_rate") c.learning_rate = std::stod(value);
      else if (key == "l2") c.l2 = std::stod(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "epochs") c.epochs = std::stoi(value);
      else if (key == "patience") c.patience = std::stoi(value);
      else if (key == "validation_fraction") c.validation_fraction = std::stod(value);
      else if (key == "norm_momentum") c.norm_momentum = std::stod(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "train_variant" || key == "variant") c.variant = variant_from_name(value);
      else if (key == "data_dir") c.data_dir = value;
      else if (key == "workers") c.workers = std::stoi(value);
      else throw Error("unrecognized config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw Error("bad value for config key '" + key + "': '" + value + "'");
    } catch (const std::out_of_range&) {
      throw Error("value out of range for config key '" + key + "': '" + value + "'");
    }
  }
  if (!(c.learning_rate > 0) || c.l2 < 0 || c.batch_size < 1 || c.epochs < 0 || c.workers < 1 ||
      c.validation_fraction < 0 || c.validation_fraction >= 1)
    throw Error("config values out of range");
  return c;
}

Split split_validation(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eed5eed5eedULL);
  rng.shuffle(order.begin(), order.end());
  Split s;
  if (fraction <= 0.0) {
    s.train = order;
    s.validation = order;
    std::sort(s.validation.begin(), s.validation.end());
    return s;
  }
  auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, n > 1 ? 1 : 0, n > 1 ? n - 1 : n);
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  return s;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_token_acc\n";
  os.precision(10);
  for (const auto& m : metrics)
    os << m.epoch << ',' << m.train_loss << ',' << m.val_loss << ',' << m.val_token_acc << '\n';
  return os.str();
}

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double token_accuracy(std::span<const Token> predicted, std::span<const Token> truth) {
  const std::size_t longest = std::max(predicted.size(), truth.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(predicted, truth)) / static_cast<double>(longest);
}

Accuracy evaluate_accuracy(const ModelParams& params, const Dataset& data, std::span<const std::size_t> subset) {
  Accuracy acc;
  if (subset.empty()) return acc;
  for (std::size_t i : subset) {
    const Sample& s = data[i];
    const TokenSequence predicted = greedy_decode(params, s.image).body();
    acc.token_accuracy += token_accuracy(predicted, s.tokens);
    acc.sequence_accuracy += predicted == s.tokens ? 1.0 : 0.0;
    acc.mean_reward += episode_reward(predicted, s.image);
  }
  const double n = static_cast<double>(subset.size());
  acc.token_accuracy /= n;
  acc.sequence_accuracy /= n;
  acc.mean_reward /= n;
  return acc;
}

Accuracy evaluate_accuracy(const ModelParams& params, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate_accuracy(params, data, all);
}

namespace {

struct Partial {
  ModelParams grad;
  NormStatistics stats;
  double loss = 0.0;
  std::size_t tokens = 0;
  std::exception_ptr error;
};

// Groups that supervised training never updates.
const std::set<std::string> kSupervisedSkip = {"value"};

double split_loss(const ModelParams& params, const Dataset& data, std::span<const std::size_t> subset,
                  std::size_t* tokens) {
  double loss = 0.0;
  for (std::size_t i : subset) {
    const TokenSequence targets = with_end(data[i].tokens);
    loss += sequence_nll(params, data[i].image, targets);
    *tokens += targets.size();
  }
  return loss;
}

}  // namespace

BatchResult train_batch(ParameterStore& store, const Dataset& data, std::span<const std::size_t> batch,
                        const TrainConfig& config, std::size_t batch_index) {
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(batch.size())));
  const bool encoder_trainable = !store.is_frozen("encoder");
  const BackwardScope scope{encoder_trainable, !store.is_frozen("history")};
  std::vector<Partial> parts(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    Partial& p = parts[static_cast<std::size_t>(w)];
    try {
      p.grad = store.params.zeros_like();
      p.stats.reset(store.params.encoder);
      const std::size_t begin = batch.size() * w / workers;
      const std::size_t end = batch.size() * (w + 1) / workers;
      for (std::size_t k = begin; k < end; ++k) {
        const Sample& s = data[batch[k]];
        const TokenSequence targets = with_end(s.tokens);
        p.loss += sequence_nll_gradient(store.params, s.image, targets, p.grad,
                                        encoder_trainable ? &p.stats : nullptr, scope);
        p.tokens += targets.size();
      }
    } catch (...) {
      p.error = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (auto& p : parts)
    if (p.error) std::rethrow_exception(p.error);

  ModelParams& grad = parts[0].grad;
  BatchResult result;
  result.loss = parts[0].loss;
  result.tokens = parts[0].tokens;
  for (std::size_t w = 1; w < parts.size(); ++w) {
    auto dst = grad.views();
    const auto src = parts[w].grad.views();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].vec() += src[i].vec();
    parts[0].stats.merge(parts[w].stats);
    result.loss += parts[w].loss;
    result.tokens += parts[w].tokens;
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  result.loss *= scale;
  std::set<std::string> skip = kSupervisedSkip;
  skip.insert(store.frozen.begin(), store.frozen.end());
  result.penalty = config.l2 * l2_penalty(store.params, skip);
  if (!std::isfinite(result.loss) || !std::isfinite(result.penalty))
    throw NonFiniteLoss(batch_index, "loss " + std::to_string(result.loss));

  for (auto& v : grad.views()) v.vec() *= scale;
  if (config.l2 > 0) add_l2_gradient(store.params, grad, config.l2, skip);
  adam_update(store, grad, config.learning_rate, kSupervisedSkip);
  if (encoder_trainable) update_running_statistics(store.params.encoder, parts[0].stats, config.norm_momentum);
  return result;
}

TrainResult train_supervised(ParameterStore store, const TrainConfig& config, const Dataset& data,
                             const std::optional<std::filesystem::path>& metrics_path,
                             const EpochCallback& on_epoch) {
  if (data.empty()) throw Error("train_supervised: empty dataset");
  for (const auto& [k, v] : config.to_key_values()) store.config[k] = v;

  const Split split = split_validation(data.size(), config.validation_fraction, config.seed);
  Rng order_rng(config.seed * 0x9E3779B97F4A7C15ULL + 17);

  TrainResult result;
  result.store = store;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::size_t batch_index = 0;

  auto write_metrics = [&]() {
    if (!metrics_path) return;
    std::ofstream out(*metrics_path);
    if (!out) throw Error("cannot write metrics to " + metrics_path->string());
    out << metrics_csv(result.metrics);
  };
  write_metrics();

  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double train_loss = 0.0;
    std::size_t train_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const BatchResult b = train_batch(store, data, batch, config, batch_index++);
      train_loss += b.loss * static_cast<double>(batch.size());
      train_tokens += b.tokens;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = train_loss / static_cast<double>(train_tokens);
    std::size_t val_tokens = 0;
    m.val_loss = split_loss(store.params, data, split.validation, &val_tokens) / static_cast<double>(val_tokens);
    m.val_token_acc = evaluate_accuracy(store.params, data, split.validation).token_accuracy;
    result.metrics.push_back(m);
    write_metrics();
    if (on_epoch) on_epoch(m);

    if (m.val_loss < best_val) {
      best_val = m.val_loss;
      since_best = 0;
      result.store = store;
      result.best_epoch = epoch;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  if (result.best_epoch == 0) result.store = store;
  return result;
}

TrainResult train_supervised(const TrainConfig& config, const Dataset& data,
                             const std::optional<std::filesystem::path>& metrics_path,
                             const EpochCallback& on_epoch) {
  ParameterStore store = ParameterStore::create(config.variant);
  glorot_init(store, config.seed);
  return train_supervised(std::move(store), config, data, metrics_path, on_epoch);
}

}  // namespace stn
