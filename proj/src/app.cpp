#include "cdl/app.hpp"

#include <string>
#include <system_error>

#include "cdl/checkpoint.hpp"
#include "cdl/error.hpp"
#include "cdl/ranking.hpp"
#include "cdl/text.hpp"

namespace cdl {

namespace fs = std::filesystem;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path, const char* what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw IoError(std::string(what) + " not found: " + path.string());
  }
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const Sample& s : data.samples()) out.push_back(s.label);
  return out;
}

// Requested sigma dims that exceed what the data supports are an error, not
// silently dropped.
std::vector<VariancePoint> sigma_curve_for(const Matrix& emb, const std::vector<int>& labels,
                                           const EvalConfig& config) {
  if (config.sigma_dims.empty()) return {};
  return variance_curve(emb, labels, config.sigma_dims, config.sigma_inter_norm);
}

void check_input_dim(const EmbeddingNet& net, const Dataset& data, const fs::path& path) {
  if (data.input_dim() != net.input_dim()) {
    throw DataError(path.string() + ": checkpoint expects input width " +
                    std::to_string(net.input_dim()) + ", file has " +
                    std::to_string(data.input_dim()));
  }
}

std::string diagnostics_text(const Diagnostics& d) {
  std::string s = "sigma_intra ";
  append_double(s, d.sigma_full.intra);
  s += "\nsigma_inter ";
  append_double(s, d.sigma_full.inter);
  s += "\ncorrelation_cross_block ";
  append_double(s, d.correlation_cross_block);
  s += "\n";
  return s;
}

}  // namespace

Matrix embed_normalized(const EmbeddingNet& net, const Dataset& data) {
  return normalize_rows(embed(net, data.all().features));
}

EvalReport evaluate_model(const EmbeddingNet& net, const CoupledHeads& heads,
                          const Dataset& gallery, const Dataset& probe, const EvalConfig& config) {
  if (probe.empty()) throw DataError("evaluation: probe set is empty");
  if (gallery.empty()) throw DataError("evaluation: gallery set is empty");
  const Matrix g = embed_normalized(net, gallery);
  const Matrix p = embed_normalized(net, probe);
  const std::vector<int> gl = labels_of(gallery);
  const std::vector<int> pl = labels_of(probe);

  EvalReport r;
  const ScoreMatrix sm = score(p, pl, g, gl);
  r.rank1 = rank1(sm);
  r.roc = roc(sm, config.far_points);
  r.probes = probe.size();
  r.gallery = gallery.size();

  Matrix pooled(p.rows() + g.rows(), p.cols());
  pooled << p, g;
  std::vector<int> pooled_labels = pl;
  pooled_labels.insert(pooled_labels.end(), gl.begin(), gl.end());
  r.sigma_full = variance_analysis(pooled, pooled_labels, config.sigma_inter_norm);
  r.sigma_curve = sigma_curve_for(pooled, pooled_labels, config);
  r.correlation = correlation_matrix(heads);
  r.correlation_cross_block = cross_block_mean(r.correlation);
  return r;
}

Diagnostics diagnose(const EmbeddingNet& net, const CoupledHeads& heads, const Dataset& data,
                     const EvalConfig& config) {
  if (data.empty()) throw DataError("diagnose: dataset is empty");
  const Matrix emb = embed_normalized(net, data);
  const std::vector<int> labels = labels_of(data);
  Diagnostics d;
  d.sigma_full = variance_analysis(emb, labels, config.sigma_inter_norm);
  d.sigma_curve = sigma_curve_for(emb, labels, config);
  d.correlation = correlation_matrix(heads);
  d.correlation_cross_block = cross_block_mean(d.correlation);
  return d;
}

GenerationOracle cmd_gen_data(const Config& config, const fs::path& out_dir) {
  validate(config);
  const SynthSpec spec = config.synth_spec();
  const SyntheticData data = generate(spec);
  make_dir(out_dir);
  save_dataset(data.train, out_dir / "train.csv");
  save_dataset(data.gallery, out_dir / "gallery.csv");
  save_dataset(data.probe, out_dir / "probe.csv");

  std::string manifest = "# cdl-data manifest\nseed = " + std::to_string(config.seed) +
                         "\ndata_seed = " + std::to_string(spec.seed) + "\n";
  for (const ConfigKey& k : config_schema()) {
    if (k.name.rfind("data.", 0) == 0) manifest += k.name + " = " + k.get(config) + "\n";
  }
  manifest += "train_rows = " + std::to_string(data.train.size()) + "\n";
  manifest += "gallery_rows = " + std::to_string(data.gallery.size()) + "\n";
  manifest += "probe_rows = " + std::to_string(data.probe.size()) + "\n";
  manifest += "oracle_raw_rank1 = " + format_double(data.oracle.raw_rank1) + "\n";
  manifest += "oracle_latent_rank1 = " + format_double(data.oracle.latent_rank1) + "\n";
  write_file_atomic(out_dir / "manifest.txt", manifest);
  return data.oracle;
}

FitResult cmd_train(const Config& config, const fs::path& data_dir, const fs::path& out_dir,
                    const std::optional<fs::path>& resume) {
  validate(config);
  const fs::path train_path = data_dir / "train.csv";
  require_file(train_path, "training data");
  const Dataset train = load_dataset(train_path, config.data.input_dim);
  if (train.empty()) throw DataError(train_path.string() + ": training set is empty");
  std::optional<TrainState> start;
  if (resume) {
    require_file(*resume, "checkpoint");
    start = load_checkpoint(*resume);
    start->heads.params = config.trainer.heads;
  }
  const TrainConfig tc = config.train_config();
  const std::vector<LayerSpec> specs = config.layer_specs(train.input_dim());

  make_dir(out_dir);
  write_file_atomic(out_dir / "config.txt", format_config(config));
  const CheckpointHook hook = [&](const TrainState& s) {
    save_checkpoint(s, out_dir / ("checkpoint_" + std::to_string(s.iteration) + ".txt"));
  };
  FitResult result = fit(train, specs, tc, std::move(start), hook);
  save_checkpoint(result.state, out_dir / "checkpoint.txt");
  write_file_atomic(out_dir / "train_log.tsv", format_log(result.log));
  return result;
}

EvalReport cmd_eval(const Config& config, const fs::path& checkpoint, const fs::path& gallery,
                    const fs::path& probe, const fs::path& out_dir) {
  validate(config);
  require_file(checkpoint, "checkpoint");
  require_file(gallery, "gallery");
  require_file(probe, "probe");
  const TrainState state = load_checkpoint(checkpoint);
  const Dataset g = load_dataset(gallery);
  const Dataset p = load_dataset(probe);
  if (p.empty()) throw DataError(probe.string() + ": probe set is empty");
  if (g.empty()) throw DataError(gallery.string() + ": gallery set is empty");
  check_input_dim(state.net, g, gallery);
  check_input_dim(state.net, p, probe);
  const EvalReport report = evaluate_model(state.net, state.heads, g, p, config.eval);
  make_dir(out_dir);
  write_eval_report(report, out_dir);
  return report;
}

Diagnostics cmd_diagnose(const Config& config, const fs::path& checkpoint, const fs::path& dataset,
                         const fs::path& out_dir) {
  validate(config);
  require_file(checkpoint, "checkpoint");
  require_file(dataset, "dataset");
  const TrainState state = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(dataset);
  if (data.empty()) throw DataError(dataset.string() + ": dataset is empty");
  check_input_dim(state.net, data, dataset);
  const Diagnostics d = diagnose(state.net, state.heads, data, config.eval);
  make_dir(out_dir);
  write_file_atomic(out_dir / "sigma.csv", sigma_csv(d.sigma_curve));
  write_file_atomic(out_dir / "correlation.csv", correlation_csv(d.correlation));
  write_file_atomic(out_dir / "diagnostics.txt", diagnostics_text(d));
  return d;
}

int exit_code(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::config: return 2;
      case ErrorKind::data: return 3;
      case ErrorKind::numeric: return 4;
      case ErrorKind::io: return 5;
    }
  }
  return 1;
}

}  // namespace cdl
