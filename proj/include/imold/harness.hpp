#pragma once

// Training loop with best-validation model selection, multi-seed runs,
// checkpoints, evaluation and embedding export.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "imold/graph.hpp"
#include "imold/metrics.hpp"
#include "imold/model.hpp"

namespace imold {

struct RunConfig {
  ModelConfig model;  // task is filled in from the dataset
  int batch_size = 128;
  double lr = 1e-3;
  int max_epochs = 200;
  std::vector<std::uint64_t> seeds{0};
  std::string dataset;
  std::optional<TaskKind> task_override;
  // "auto" picks roc_auc / ap / mae from the task; "accuracy" is allowed for
  // binary tasks.
  std::string select_metric = "auto";

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

// Metric actually used for a task.
std::string resolve_metric(const std::string& select_metric, const TaskDescriptor& task);
bool metric_higher_is_better(const std::string& metric);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;  // mean over the epoch's training batches
  double val = 0.0;
  double val_loss = 0.0;  // prediction loss on val; breaks metric ties
  double test = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double best_val_metric = 0.0;
  double test_metric_at_best_val = 0.0;
  double train_metric_at_best_val = 0.0;
  std::vector<EpochRecord> curve;
};

struct RunResult {
  std::string metric;
  std::vector<SeedResult> seeds;
  double test_mean = 0.0;
  double test_std = 0.0;  // sample standard deviation over seeds
  double train_mean = 0.0;
};

nlohmann::json to_json(const RunResult& r);
nlohmann::json to_json(const EvalReport& r);

// Self-contained model snapshot.
struct Checkpoint {
  RunConfig config;
  ModelState state;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string rng_state;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);  // CheckpointError on any defect
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct Predictions {
  Matrix logits;  // N x K
  Matrix labels;
  Matrix mask;
};

Predictions predict(const ModelState& state, const ModelConfig& model,
                    std::span<const Graph> graphs, int batch_size);

// Mean prediction loss over observed labels: logit BCE or squared error.
double prediction_loss(const Predictions& p, TaskKind kind);

// Computes `metric` ("accuracy", "roc_auc", "ap", "mae") on predictions.
EvalReport compute_metric(const std::string& metric, const Predictions& p);

// Every metric that applies to the task.
std::vector<EvalReport> evaluate_all(const Checkpoint& ckpt, const Dataset& data, Split split);
// The checkpoint's selection metric on one split. CheckpointError when the
// checkpoint does not fit the dataset.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, Split split);

// One JSON line per graph: id, split, env, z_inv, z_spu, z.
void export_embeddings(const Checkpoint& ckpt, const Dataset& data, std::ostream& out);

struct TrainHooks {
  std::function<void(std::uint64_t seed, const EpochRecord&)> on_epoch;
};

// Trains one seed; `best` receives the best-validation snapshot.
SeedResult train_seed(const RunConfig& config, const Dataset& data, std::uint64_t seed,
                      Checkpoint* best = nullptr, const TrainHooks& hooks = {});

// Trains every seed in config.seeds. When out_dir is set, writes result.json
// and checkpoint_seed<k>.json there.
RunResult train(const RunConfig& config, const Dataset& data,
                const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                const TrainHooks& hooks = {});

// Fills the task and node-type count from the dataset; ValidationError on
// mismatch with explicit config values.
RunConfig bind_to_dataset(RunConfig config, const Dataset& data);

}  // namespace imold
