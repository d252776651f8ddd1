#pragma once

#include "taylorglo/dataset.hpp"
#include "taylorglo/mlp.hpp"
#include "taylorglo/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace taylorglo {

/// splitmix64 over the given words; used for every per-candidate and
/// per-retry seed so results never depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> words);

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" or "mnist"
  std::uint64_t seed = 1;
  int n_classes = 3;
  int input_dim = 20;
  int n_per_class = 300;
  double separation = 3.0;
  std::string mnist_dir;
  std::size_t train_limit = 0;  // 0 keeps all training examples
};

Dataset make_dataset(const DatasetSpec& spec);

/// Parses "synthetic[:key=value,...]" or "mnist:<dir>[:<train_limit>]".
DatasetSpec parse_dataset_spec(const std::string& text);

struct RetryPolicy {
  double accuracy_floor = 0.15;
  int check_at = 0;  // step of the accuracy check; 0 = ten epochs, capped at steps
  int max_retries = 2;
};

struct EvolutionConfig {
  int order = 3;
  int lambda = 28;
  double sigma0 = 1.2;
  int generations = 15;
  TrainConfig train{.steps = 500, .batch_size = 100, .learning_rate = 0.01};
  std::vector<int> hidden{128};
  RetryPolicy retry;
  DatasetSpec dataset;
  double fraction_of_train_data = 1.0;
  std::uint64_t seed = 0;
  int parallelism = 1;
};

void to_json(nlohmann::json& j, const EvolutionConfig& c);
void from_json(const nlohmann::json& j, EvolutionConfig& c);
void to_json(nlohmann::json& j, const DatasetSpec& d);
void from_json(const nlohmann::json& j, DatasetSpec& d);

/// Check step actually used for a dataset: the configured value, or the step
/// count of ten epochs over the training split capped at the run length.
int resolve_check_at(const EvolutionConfig& config, const Dataset& data);

struct CandidateRecord {
  int generation = 0;
  int index = 0;
  std::vector<double> theta;
  double fitness = 0.0;
  int retries_used = 0;
  bool diverged = false;
  double wall_time = 0.0;  // seconds; not part of the reproducible log
};

struct GenerationLog {
  std::vector<std::vector<CandidateRecord>> generations;
  std::vector<double> best_so_far;  // after each generation
  std::vector<double> mean_fitness;
  std::vector<double> max_fitness;
  std::optional<CandidateRecord> best;

  /// Partial trainings run, counting retries.
  std::size_t evaluation_count() const;
  void append(std::vector<CandidateRecord> records);
};

/// One partially trained model under the Taylor loss given by theta, with the
/// retry rule applied. Never throws: any failure folds into the record.
CandidateRecord evaluate_candidate(std::span<const double> theta, const EvolutionConfig& config,
                                   const Dataset& data, std::uint64_t candidate_seed);

/// The model a single attempt starts from and the trained result; exposed so
/// tests can inspect the weights.
struct AttemptResult {
  MlpModel initial;
  MlpModel trained;
  EvalOutcome outcome;
};
AttemptResult run_attempt(const Loss& loss, const EvolutionConfig& config, const Dataset& data,
                          std::uint64_t attempt_seed, int check_at);

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;
  bool resume = false;
  std::function<void(int generation, const GenerationLog&)> on_generation;
};

/// CMA-ES over the trimmed Taylor parameters starting at the zero vector,
/// maximizing validation accuracy after partial training.
GenerationLog run_evolution(const EvolutionConfig& config, const Dataset& data,
                            const RunOptions& options = {});

void write_generations_csv_header(std::ostream& os, std::size_t dim);
void write_generation_rows(std::ostream& os, const std::vector<CandidateRecord>& records);
/// Reads records back; theta values round-trip exactly.
std::vector<CandidateRecord> read_generations_csv(const std::filesystem::path& path);

nlohmann::json best_to_json(const CandidateRecord& best, int order);
/// Accepts best.json or a text file of comma/whitespace separated numbers.
std::vector<double> load_theta(const std::filesystem::path& path);
/// Parses a comma-separated list of numbers.
std::vector<double> parse_theta_list(const std::string& text);

struct TrainedRun {
  std::uint64_t seed = 0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool diverged = false;
};

/// Independent seeded trainings from fresh models; run i uses seed
/// first_seed + i for both initialization and batch order, so two losses
/// trained with the same seeds form matched pairs.
std::vector<TrainedRun> train_seeded_models(const Loss& loss, const Dataset& data,
                                            const std::vector<int>& hidden, const TrainConfig& train,
                                            int n_seeds, std::uint64_t first_seed = 0,
                                            int parallelism = 1, MlpModel* first_model = nullptr);

struct ArmSummary {
  std::vector<double> accuracies;  // successful runs only
  int successful = 0;
  int total = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepRow {
  double fraction = 1.0;
  ArmSummary crossentropy;
  ArmSummary taylor;
  std::vector<double> paired_gap;  // taylor - crossentropy per seed
};

struct SweepConfig {
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::vector<double> theta;
  int order = 3;
  std::vector<int> hidden{128};
  TrainConfig train;
  int seeds = 5;
  std::uint64_t first_seed = 0;
  int parallelism = 1;
};

/// Trains cross-entropy and evolved-loss models on each fraction of the
/// training split and reports test accuracy per arm.
std::vector<SweepRow> reduced_dataset_sweep(const SweepConfig& config, const Dataset& data);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Runs `fn(i)` for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace taylorglo
