#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmea/alignloss.hpp"
#include "mmea/config.hpp"
#include "mmea/encoders.hpp"
#include "mmea/inference.hpp"
#include "mmea/kgdata.hpp"
#include "mmea/seeding.hpp"

namespace mmea {

struct AdamWConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moments per Param, in the order of ModelParams::all().
struct AdamWState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update from each Param's grad. Moments are
/// created on the first call. Throws std::domain_error on a non-finite gradient.
void adamw_step(std::span<Param* const> params, AdamWState& state, const AdamWConfig& cfg);

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t batch_size = 7500;
  std::size_t base_epochs = 500;
  std::size_t il_epochs = 500;
  std::uint64_t rng_seed = 0;
  ILConfig il;
  LossConfig loss;
  ModelDims dims;
  /// Modalities to leave out of the model entirely.
  std::vector<Modality> disabled;

  bool unsupervised = false;
  /// Visual pivots to induce in unsupervised mode (0 = as many as possible).
  std::size_t visual_pivot_count = 0;
  std::optional<double> pivot_threshold;

  bool use_csls = true;
  std::size_t csls_k = 3;
  CandidatePool eval_pool = CandidatePool::test_targets;

  void validate() const;
  /// Reads the model / training keys of a flat config. Unset keys keep defaults.
  static TrainConfig from_config(const KeyValueConfig& cfg);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::size_t pivot_count = 0;
  std::vector<double> weights;
};

struct TrainState {
  ModelParams params;
  AdamWState optimizer;
  std::size_t epoch = 0;
  PivotLedger ledger;
  std::vector<EpochRecord> history;
  /// Unsupervised runs: the induced visual pivots that seeded the ledger.
  std::vector<ScoredPivot> induced_pivots;

  const std::vector<Modality>& modalities() const { return params.modalities; }
};

/// Modalities the model will use: every modality of the task minus `cfg.disabled`.
std::vector<Modality> active_modalities(const AlignmentTask& task, const TrainConfig& cfg);

/// Greedy visual pivots over raw image features of entities whose image is observed.
/// n = 0 asks for as many as the smaller side allows; `threshold` then filters.
std::vector<ScoredPivot> visual_pivots(const AlignmentTask& task, std::size_t n, std::optional<double> threshold);

/// Fraction of `pivots` that appear in `gold`.
double pivot_precision(const std::vector<ScoredPivot>& pivots, const std::vector<PivotPair>& gold);

TrainState train(const AlignmentTask& task, const TrainConfig& cfg);

/// Scores the test pivots with the trained model.
EvalReport evaluate_model(const TrainState& state, const AlignmentTask& task, const TrainConfig& cfg,
                          bool stratified = false);

/// Trains without `disabled_modalities` and evaluates (stratified).
EvalReport ablate(const AlignmentTask& task, const TrainConfig& cfg, const std::vector<Modality>& disabled_modalities);

/// epoch,loss,pivot_count,w_<modality>...
std::string history_csv(const TrainState& state);

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace mmea
