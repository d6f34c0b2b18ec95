#pragma once

#include <exception>
#include <filesystem>
#include <optional>

#include "cdl/config.hpp"
#include "cdl/eval.hpp"
#include "cdl/trainer.hpp"

namespace cdl {

// Unit-length rows of the trunk's embeddings; every diagnostic is computed on
// these so that runs with different embedding scales compare.
Matrix embed_normalized(const EmbeddingNet& net, const Dataset& data);

// Probe against gallery: scores, rank-1, ROC, sigma curves over the pooled
// probe and gallery embeddings, and the head correlation matrix.
EvalReport evaluate_model(const EmbeddingNet& net, const CoupledHeads& heads,
                          const Dataset& gallery, const Dataset& probe, const EvalConfig& config);

struct Diagnostics {
  std::vector<VariancePoint> sigma_curve;
  VarianceStats sigma_full;
  CorrelationResult correlation;
  double correlation_cross_block = 0.0;
};

Diagnostics diagnose(const EmbeddingNet& net, const CoupledHeads& heads, const Dataset& data,
                     const EvalConfig& config);

// The four commands. Each validates its inputs before creating out_dir or
// writing anything.

// train.csv, gallery.csv, probe.csv and manifest.txt.
GenerationOracle cmd_gen_data(const Config& config, const std::filesystem::path& out_dir);

// Reads <data_dir>/train.csv. Writes checkpoint.txt, checkpoint_<t>.txt every
// trainer.checkpoint_every steps, train_log.tsv and config.txt. With resume,
// training continues from that checkpoint with the heads hyperparameters of
// config.
FitResult cmd_train(const Config& config, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out_dir,
                    const std::optional<std::filesystem::path>& resume);

EvalReport cmd_eval(const Config& config, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& gallery, const std::filesystem::path& probe,
                    const std::filesystem::path& out_dir);

// sigma.csv, correlation.csv and diagnostics.txt.
Diagnostics cmd_diagnose(const Config& config, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& dataset,
                         const std::filesystem::path& out_dir);

// 2 config, 3 data, 4 numeric, 5 io, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace cdl
