#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cdl/linalg.hpp"
#include "cdl/modality.hpp"
#include "cdl/rng.hpp"

namespace cdl {

struct Sample {
  Vector features;
  int label = 0;
  Modality modality = Modality::nir;
};

// A mini-batch in matrix form, one sample per row.
struct Batch {
  Matrix features;
  std::vector<int> labels;
  std::vector<Modality> modalities;

  std::size_t size() const { return labels.size(); }
  bool has_both_modalities() const;
};

// Immutable once built; every sample has the same width, finite features, a
// non-negative label.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(int input_dim) : input_dim_(input_dim) {}

  // Throws DataError if the sample breaks a dataset invariant.
  void add(Sample sample);

  int input_dim() const { return input_dim_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  // max label + 1, 0 when empty.
  int identity_count() const { return identity_count_; }

  Batch gather(std::span<const std::size_t> rows) const;
  Batch all() const;

 private:
  int input_dim_ = 0;
  int identity_count_ = 0;
  std::vector<Sample> samples_;
};

// Plain-text format, one sample per line after a header:
//   # cdl-dataset v1 input_dim=<D>
//   <label>,<modality>,<f_0>,...,<f_{D-1}>
// Values use shortest round-trip decimal, so save -> load is bit-exact. A
// zero-byte file is an empty dataset.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<int> expected_input_dim = std::nullopt);

struct SynthSpec {
  int train_identities = 100;
  int test_identities = 40;
  int samples_per_identity = 6;  // per modality
  int latent_dim = 16;
  int input_dim = 64;
  // Modality 1 uses A_1 = A_0 + scale * Delta; zero makes the modalities identical.
  double modality_transform_scale = 2.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
};

// Throws std::invalid_argument naming the bad field.
void validate(const SynthSpec& spec);

// Cross-modal nearest-neighbor rank-1 of probe against gallery, computed while
// generating: once in the raw input space, once on the true latents.
struct GenerationOracle {
  double raw_rank1 = 0.0;
  double latent_rank1 = 0.0;
};

struct SyntheticData {
  Dataset train;
  Dataset gallery;  // one vis sample per held-out identity
  Dataset probe;    // every nir sample of the held-out identities
  GenerationOracle oracle;
};

// Identities [0, train) go to train, [train, train + test) are held out.
SyntheticData generate(const SynthSpec& spec);

// Identity-balanced cross-modal batch sampling. With require_paired, only
// identities that have samples in both modalities are eligible.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, bool require_paired);

  // Up to k samples per modality for each of p distinct identities, drawn
  // without replacement inside each identity/modality cell. Throws DataError
  // if fewer than p identities are eligible.
  Batch sample(int p, int k, Rng& rng) const;
  std::vector<std::size_t> sample_rows(int p, int k, Rng& rng) const;

  std::size_t eligible_identities() const { return eligible_.size(); }

 private:
  const Dataset* data_;
  // cells_[identity][modality] = row indices
  std::vector<std::array<std::vector<std::size_t>, 2>> cells_;
  std::vector<int> eligible_;
  std::size_t paired_ = 0;
  std::size_t populated_ = 0;
};

Batch sample_batch(const Dataset& data, int p, int k, Rng& rng, bool require_paired = true);

}  // namespace cdl
