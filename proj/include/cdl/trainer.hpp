#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdl/coupling.hpp"
#include "cdl/data.hpp"
#include "cdl/net.hpp"
#include "cdl/ranking.hpp"
#include "cdl/rng.hpp"

namespace cdl {

struct TrainConfig {
  double lambda1 = 1.0;  // weight of the relevance loss
  double lambda2_start = 0.0;  // ranking weight, ramped linearly
  double lambda2_end = 1.0;
  double lr_start = 0.05;  // geometric decay to lr_end
  double lr_end = 0.0005;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int identities_per_batch = 8;
  int samples_per_modality = 2;
  int iterations = 6000;
  std::uint64_t seed = 1;
  bool include_unpaired = true;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  double heads_init_std = 0.0;  // <= 0 means 1/sqrt(embedding dim)
  RankingConfig ranking;
  HeadsParams heads;
};

// Throws std::invalid_argument naming the bad field.
void validate(const TrainConfig& config);

struct Schedule {
  double lr = 0.0;
  double lambda2 = 0.0;
};

// Iterations run 0 .. iterations-1. Learning rate interpolates geometrically
// and lambda2 linearly so that iteration 0 gets the start values and the last
// iteration the end values.
Schedule schedule(std::int64_t iteration, const TrainConfig& config);

// Heavy-ball buffers, same shapes as the parameters they follow.
struct Velocity {
  NetGrads net;
  Matrix w_n;
  Matrix w_v;
};

struct TrainState {
  EmbeddingNet net;
  CoupledHeads heads;
  Velocity velocity;
  std::int64_t iteration = 0;
  Rng batch_rng;
};

// Fresh parameters, zero velocity, batch stream forked from config.seed.
TrainState init_state(const std::vector<LayerSpec>& specs, int class_count,
                      const TrainConfig& config);

struct LossParts {
  double total = 0.0;
  double relevance = 0.0;
  double softmax = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double ranking = 0.0;
  std::size_t triplets = 0;
  bool single_modality = false;  // ranking skipped for lack of cross-modal pairs
};

struct ObjectiveWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
};

struct ObjectiveEval {
  LossParts parts;
  std::vector<Triplet> triplets;
  // Filled only when gradients are requested.
  NetGrads d_net;
  Matrix d_w_n;
  Matrix d_w_v;
};

// J = lambda1 * relevance + lambda2 * ranking on one batch, with gamma taken
// from heads as is. Triplets are mined on the normalized embeddings unless
// fixed_triplets is given. Ranking gradients reach the trunk only; head
// gradients come from the relevance term only.
ObjectiveEval evaluate_objective(const EmbeddingNet& net, const CoupledHeads& heads,
                                 const Batch& batch, const ObjectiveWeights& weights,
                                 const RankingConfig& ranking, bool with_gradients,
                                 const std::vector<Triplet>* fixed_triplets = nullptr);

// Objective value at the current state with lambda2 from the schedule at the
// state's iteration.
LossParts combined_loss(const TrainState& state, const Batch& batch, const TrainConfig& config);

enum class StepEvent { forward, gamma_refresh, gradients, theta_update, heads_update };

struct LogRecord {
  std::int64_t iteration = 0;
  LossParts parts;
  double lr = 0.0;
  double lambda2 = 0.0;
};

// One alternating update, in this order: forward and loss (previous gamma),
// gamma refresh, gradients under the new gamma, trunk update, heads update.
// Throws NumericError on a non-finite loss. Events are appended to trace when
// it is non-null.
LogRecord train_step(TrainState& state, const Batch& batch, const Schedule& sched,
                     const TrainConfig& config, std::vector<StepEvent>* trace = nullptr);

struct FitResult {
  TrainState state;
  std::vector<LogRecord> log;
};

using CheckpointHook = std::function<void(const TrainState&)>;

// Runs train_step from the state's iteration up to config.iterations on
// batches drawn from the state's batch stream. Starts from init_state unless
// resume is given; on_checkpoint fires every config.checkpoint_every steps.
FitResult fit(const Dataset& train, const std::vector<LayerSpec>& specs,
              const TrainConfig& config, std::optional<TrainState> resume = std::nullopt,
              const CheckpointHook& on_checkpoint = {});

// Tab-separated, one header line then one line per record.
std::string log_header();
std::string format_log_record(const LogRecord& r);
std::string format_log(const std::vector<LogRecord>& log);

}  // namespace cdl
