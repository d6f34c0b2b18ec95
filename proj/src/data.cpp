#include "cdl/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "cdl/error.hpp"
#include "cdl/text.hpp"

namespace cdl {

bool Batch::has_both_modalities() const {
  bool seen[2] = {false, false};
  for (Modality m : modalities) seen[static_cast<int>(m)] = true;
  return seen[0] && seen[1];
}

void Dataset::add(Sample sample) {
  if (input_dim_ <= 0) throw DataError("dataset: input dim not set");
  if (sample.features.size() != input_dim_) {
    throw DataError("dataset: sample has " + std::to_string(sample.features.size()) +
                    " features, expected " + std::to_string(input_dim_));
  }
  if (!sample.features.allFinite()) throw DataError("dataset: sample has non-finite features");
  if (sample.label < 0) throw DataError("dataset: negative label " + std::to_string(sample.label));
  const int m = static_cast<int>(sample.modality);
  if (m != 0 && m != 1) throw DataError("dataset: modality must be 0 or 1");
  identity_count_ = std::max(identity_count_, sample.label + 1);
  samples_.push_back(std::move(sample));
}

Batch Dataset::gather(std::span<const std::size_t> rows) const {
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(rows.size()), input_dim_);
  b.labels.reserve(rows.size());
  b.modalities.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Sample& s = samples_.at(rows[i]);
    b.features.row(static_cast<Eigen::Index>(i)) = s.features.transpose();
    b.labels.push_back(s.label);
    b.modalities.push_back(s.modality);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> rows(samples_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return gather(rows);
}

namespace {

constexpr std::string_view kHeaderPrefix = "# cdl-dataset v1 input_dim=";

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::string out;
  out.reserve(data.size() * static_cast<std::size_t>(data.input_dim() + 2) * 20 + 64);
  out += kHeaderPrefix;
  out += std::to_string(data.input_dim());
  out += '\n';
  for (const Sample& s : data.samples()) {
    out += std::to_string(s.label);
    out += ',';
    out += std::to_string(static_cast<int>(s.modality));
    for (Eigen::Index j = 0; j < s.features.size(); ++j) {
      out += ',';
      append_double(out, s.features(j));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<int> expected_input_dim) {
  const std::string text = read_file(path);
  const std::string where = path.string();
  if (trim(text).empty()) return Dataset(expected_input_dim.value_or(0));

  std::vector<std::string_view> lines = split(text, '\n');
  const std::string_view header = trim(lines.front());
  if (header.substr(0, kHeaderPrefix.size()) != kHeaderPrefix) {
    throw DataError(where + ":1: missing '# cdl-dataset v1 input_dim=<D>' header");
  }
  const auto dim = parse_int(header.substr(kHeaderPrefix.size()));
  if (!dim || *dim <= 0) throw DataError(where + ":1: bad input_dim in header");
  if (expected_input_dim && *expected_input_dim != *dim) {
    throw DataError(where + ": feature width " + std::to_string(*dim) + ", expected " +
                    std::to_string(*expected_input_dim));
  }

  Dataset data(static_cast<int>(*dim));
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(ln + 1) + ": ";
    const std::vector<std::string_view> fields = split(line, ',');
    if (fields.size() != static_cast<std::size_t>(*dim) + 2) {
      throw DataError(at + "expected " + std::to_string(*dim + 2) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const auto label = parse_int(fields[0]);
    if (!label || *label < 0 || *label > std::numeric_limits<int>::max()) {
      throw DataError(at + "bad label '" + std::string(fields[0]) + "'");
    }
    const auto modality = parse_int(fields[1]);
    if (!modality || (*modality != 0 && *modality != 1)) {
      throw DataError(at + "modality must be 0 or 1, got '" + std::string(fields[1]) + "'");
    }
    Sample s;
    s.label = static_cast<int>(*label);
    s.modality = static_cast<Modality>(*modality);
    s.features.resize(*dim);
    for (long long j = 0; j < *dim; ++j) {
      const auto v = parse_double(fields[static_cast<std::size_t>(j) + 2]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(at + "bad feature " + std::to_string(j) + " '" +
                        std::string(fields[static_cast<std::size_t>(j) + 2]) + "'");
      }
      s.features(j) = *v;
    }
    data.add(std::move(s));
  }
  return data;
}

void validate(const SynthSpec& spec) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw std::invalid_argument(std::string("data.") + name + " must be positive, got " +
                                  std::to_string(v));
    }
  };
  positive(spec.train_identities, "train_identities");
  positive(spec.test_identities, "test_identities");
  positive(spec.samples_per_identity, "samples_per_identity");
  positive(spec.latent_dim, "latent_dim");
  positive(spec.input_dim, "input_dim");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw std::invalid_argument("data.noise_sigma must be finite and non-negative");
  }
  if (!std::isfinite(spec.modality_transform_scale)) {
    throw std::invalid_argument("data.modality_transform_scale must be finite");
  }
}

namespace {

double nearest_neighbor_rank1(const std::vector<Vector>& probes, std::span<const int> probe_labels,
                              const std::vector<Vector>& gallery,
                              std::span<const int> gallery_labels) {
  if (probes.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double d = (probes[i] - gallery[j]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (gallery_labels[best] == probe_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

}  // namespace

SyntheticData generate(const SynthSpec& spec) {
  validate(spec);
  const int total = spec.train_identities + spec.test_identities;
  const int latent = spec.latent_dim;
  const int dim = spec.input_dim;

  Rng transform_rng = make_rng(spec.seed, "data.transform");
  Rng latent_rng = make_rng(spec.seed, "data.latent");
  Rng noise_rng = make_rng(spec.seed, "data.noise");
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](Matrix& m, Rng& rng, double scale) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * gauss(rng);
    }
  };

  // Unit-variance pre-activations for standard-normal latents.
  const double a_scale = 1.0 / std::sqrt(static_cast<double>(latent));
  Matrix a0(dim, latent), delta(dim, latent), b0(dim, 1), b_delta(dim, 1);
  fill(a0, transform_rng, a_scale);
  fill(delta, transform_rng, a_scale);
  fill(b0, transform_rng, 0.5);
  fill(b_delta, transform_rng, 0.5);
  const double s = spec.modality_transform_scale;
  const Matrix a1 = a0 + s * delta;
  const Matrix b1 = b0 + s * b_delta;

  Matrix z(latent, total);
  fill(z, latent_rng, 1.0);

  auto observe = [&](int identity, Modality m) {
    const Matrix& a = m == Modality::nir ? a0 : a1;
    const Matrix& b = m == Modality::nir ? b0 : b1;
    Vector x = (a * z.col(identity) + b).array().tanh().matrix();
    if (spec.noise_sigma > 0.0) {
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += spec.noise_sigma * gauss(noise_rng);
    }
    return x;
  };

  SyntheticData out{Dataset(dim), Dataset(dim), Dataset(dim), {}};
  for (int id = 0; id < spec.train_identities; ++id) {
    for (Modality m : {Modality::nir, Modality::vis}) {
      for (int k = 0; k < spec.samples_per_identity; ++k) out.train.add({observe(id, m), id, m});
    }
  }

  std::vector<Vector> raw_probe, raw_gallery, latent_probe, latent_gallery;
  std::vector<int> probe_labels, gallery_labels;
  for (int id = spec.train_identities; id < total; ++id) {
    Vector g = observe(id, Modality::vis);
    raw_gallery.push_back(g);
    latent_gallery.push_back(z.col(id));
    gallery_labels.push_back(id);
    out.gallery.add({std::move(g), id, Modality::vis});
    for (int k = 0; k < spec.samples_per_identity; ++k) {
      Vector p = observe(id, Modality::nir);
      raw_probe.push_back(p);
      latent_probe.push_back(z.col(id));
      probe_labels.push_back(id);
      out.probe.add({std::move(p), id, Modality::nir});
    }
  }
  out.oracle.raw_rank1 = nearest_neighbor_rank1(raw_probe, probe_labels, raw_gallery, gallery_labels);
  out.oracle.latent_rank1 =
      nearest_neighbor_rank1(latent_probe, probe_labels, latent_gallery, gallery_labels);
  return out;
}

BatchSampler::BatchSampler(const Dataset& data, bool require_paired) : data_(&data) {
  cells_.resize(static_cast<std::size_t>(data.identity_count()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    cells_[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(s.modality)].push_back(i);
  }
  for (std::size_t id = 0; id < cells_.size(); ++id) {
    const bool has_n = !cells_[id][0].empty();
    const bool has_v = !cells_[id][1].empty();
    if (has_n || has_v) ++populated_;
    if (has_n && has_v) ++paired_;
    if (require_paired ? (has_n && has_v) : (has_n || has_v)) {
      eligible_.push_back(static_cast<int>(id));
    }
  }
}

std::vector<std::size_t> BatchSampler::sample_rows(int p, int k, Rng& rng) const {
  if (p <= 0 || k <= 0) throw std::invalid_argument("sample_batch: p and k must be positive");
  if (static_cast<std::size_t>(p) > eligible_.size()) {
    throw DataError("sample_batch: requested " + std::to_string(p) + " identities, " +
                    std::to_string(eligible_.size()) + " eligible (" + std::to_string(paired_) +
                    " with both modalities, " + std::to_string(populated_) + " with any samples)");
  }
  std::vector<int> ids = eligible_;
  // Partial Fisher-Yates: the first p entries become the chosen identities.
  for (int i = 0; i < p; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), ids.size() - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[pick(rng)]);
  }
  std::vector<std::size_t> rows;
  for (int i = 0; i < p; ++i) {
    for (const auto& cell : cells_[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])]) {
      std::vector<std::size_t> pool = cell;
      const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(k));
      for (std::size_t j = 0; j < take; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
        std::swap(pool[j], pool[pick(rng)]);
        rows.push_back(pool[j]);
      }
    }
  }
  return rows;
}

Batch BatchSampler::sample(int p, int k, Rng& rng) const {
  const std::vector<std::size_t> rows = sample_rows(p, k, rng);
  return data_->gather(rows);
}

Batch sample_batch(const Dataset& data, int p, int k, Rng& rng, bool require_paired) {
  return BatchSampler(data, require_paired).sample(p, k, rng);
}

}  // namespace cdl
