#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stn/glyphlang.hpp"
#include "stn/model.hpp"

namespace stn {

using KeyValues = std::map<std::string, std::string>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2 = 1e-5;
  int batch_size = 16;
  int epochs = 50;
  int patience = 10;  // epochs without validation improvement; 0 disables
  double validation_fraction = 0.1;
  double norm_momentum = 0.1;
  std::uint64_t seed = 0;
  Variant variant = Variant::Stnr;
  std::string data_dir;
  int workers = 1;

  KeyValues to_key_values() const;
  // Unknown keys are rejected.
  static TrainConfig from_key_values(const KeyValues& kv);
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Named parameter groups with freeze flags and Adam moments.
struct ParameterStore {
  ModelParams params;
  ModelParams adam_m;
  ModelParams adam_v;
  std::int64_t adam_step = 0;
  std::set<std::string> frozen;
  KeyValues config;  // recorded run configuration

  static ParameterStore create(Variant variant);
  bool is_frozen(std::string_view group) const { return frozen.count(std::string(group)) > 0; }
};

// U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)) for weights; biases, offsets
// and means zero; scales and variances one.
void glorot_init(ParameterStore& store, std::uint64_t seed);
double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out);

double l2_penalty(const ModelParams& params, const std::set<std::string>& skip_groups = {});
void add_l2_gradient(const ModelParams& params, ModelParams& grad, double l2,
                     const std::set<std::string>& skip_groups = {});

// Single-array Adam step; `step` is the already-incremented step count.
void adam_apply(Eigen::Map<Vec> param, Eigen::Map<const Vec> grad, Eigen::Map<Vec> m, Eigen::Map<Vec> v,
                std::int64_t step, double learning_rate, AdamSettings settings = {});

// One Adam update on every unfrozen, non-statistic array. Extra groups in
// `also_frozen` are skipped for this call only.
void adam_update(ParameterStore& store, ModelParams& grad, double learning_rate,
                 const std::set<std::string>& also_frozen = {}, AdamSettings settings = {});

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
ParameterStore load_checkpoint(const std::filesystem::path& path);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
// Seeded shuffle; the first round(fraction * n) indices become validation.
// fraction == 0 validates on the training set itself.
Split split_validation(std::size_t n, double fraction, std::uint64_t seed);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // mean NLL per token
  double val_loss = 0.0;
  double val_token_acc = 0.0;
};

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

struct TrainResult {
  ParameterStore store;  // best-validation snapshot
  std::vector<EpochMetrics> metrics;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Per-batch objective: mean sequence NLL + l2 * sum ||w||^2 over weight
// arrays. Throws NonFiniteLoss with the batch index.
TrainResult train_supervised(const TrainConfig& config, const Dataset& data,
                             const std::optional<std::filesystem::path>& metrics_path = std::nullopt,
                             const EpochCallback& on_epoch = {});

// Continues from an existing store (same semantics as train_supervised).
TrainResult train_supervised(ParameterStore store, const TrainConfig& config, const Dataset& data,
                             const std::optional<std::filesystem::path>& metrics_path = std::nullopt,
                             const EpochCallback& on_epoch = {});

struct BatchResult {
  double loss = 0.0;      // mean sequence NLL over the batch
  double penalty = 0.0;   // l2 * sum ||w||^2
  std::size_t tokens = 0;
  double total() const { return loss + penalty; }
};

// One optimizer step on `batch`.
BatchResult train_batch(ParameterStore& store, const Dataset& data, std::span<const std::size_t> batch,
                        const TrainConfig& config, std::size_t batch_index);

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b);
// 1 - ED / max(|a|, |b|); two empty sequences score 1.
double token_accuracy(std::span<const Token> predicted, std::span<const Token> truth);

struct Accuracy {
  double token_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  double mean_reward = 0.0;
};

Accuracy evaluate_accuracy(const ModelParams& params, const Dataset& data);
Accuracy evaluate_accuracy(const ModelParams& params, const Dataset& data, std::span<const std::size_t> subset);

}  // namespace stn
