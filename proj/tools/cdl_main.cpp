#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cdl/app.hpp"
#include "cdl/config.hpp"
#include "cdl/error.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> overrides;
};

// Every config key doubles as a flag, e.g. --trainer.iterations 100.
void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file; defaults apply to absent keys");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "override the run seed");
  for (const cdl::ConfigKey& key : cdl::config_schema()) {
    if (key.name == "seed") continue;
    cmd->add_option_function<std::string>(
        "--" + key.name, [&c, name = key.name](const std::string& v) { c.overrides[name] = v; },
        key.doc);
  }
}

cdl::Config resolve(const Common& c) {
  cdl::Config cfg = c.config_path.empty() ? cdl::Config{} : cdl::load_config(c.config_path);
  for (const auto& [key, value] : c.overrides) cdl::apply_override(cfg, key, value);
  if (c.seed) cfg.seed = *c.seed;
  cdl::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled deep embedding for cross-modal matching"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, diag_opts;
  std::string train_data, train_resume;
  std::string eval_checkpoint, eval_data, eval_gallery, eval_probe;
  std::string diag_checkpoint, diag_dataset;

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic train/gallery/probe split");
  add_common(gen, gen_opts);

  CLI::App* train = app.add_subcommand("train", "train a model on <data>/train.csv");
  add_common(train, train_opts);
  train->add_option("--data", train_data, "directory holding train.csv")->required();
  train->add_option("--checkpoint", train_resume, "resume from this checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "score probe against gallery");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", eval_data, "directory holding gallery.csv and probe.csv");
  eval->add_option("--gallery", eval_gallery, "gallery file, overrides --data");
  eval->add_option("--probe", eval_probe, "probe file, overrides --data");

  CLI::App* diag = app.add_subcommand("diagnose", "variance curves and head correlations");
  add_common(diag, diag_opts);
  diag->add_option("--checkpoint", diag_checkpoint, "trained checkpoint")->required();
  diag->add_option("--dataset", diag_dataset, "labelled dataset to analyse")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const cdl::GenerationOracle o = cdl::cmd_gen_data(resolve(gen_opts), gen_opts.out);
      std::cout << "oracle raw_rank1 " << o.raw_rank1 << " latent_rank1 " << o.latent_rank1
                << "\n";
    } else if (train->parsed()) {
      std::optional<fs::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      const cdl::FitResult r =
          cdl::cmd_train(resolve(train_opts), train_data, train_opts.out, resume);
      std::cout << "trained to iteration " << r.state.iteration << "\n";
    } else if (eval->parsed()) {
      if (eval_gallery.empty() && eval_data.empty()) {
        throw cdl::ConfigError("eval: pass --data or both --gallery and --probe");
      }
      if (eval_gallery.empty()) eval_gallery = (fs::path(eval_data) / "gallery.csv").string();
      if (eval_probe.empty()) {
        if (eval_data.empty()) throw cdl::ConfigError("eval: --probe is required without --data");
        eval_probe = (fs::path(eval_data) / "probe.csv").string();
      }
      const cdl::EvalReport r =
          cdl::cmd_eval(resolve(eval_opts), eval_checkpoint, eval_gallery, eval_probe, eval_opts.out);
      std::cout << cdl::format_report(r);
    } else if (diag->parsed()) {
      const cdl::Diagnostics d =
          cdl::cmd_diagnose(resolve(diag_opts), diag_checkpoint, diag_dataset, diag_opts.out);
      std::cout << "sigma_intra " << d.sigma_full.intra << " sigma_inter " << d.sigma_full.inter
                << " correlation_cross_block " << d.correlation_cross_block << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cdl::exit_code(e);
  }
  return 0;
}
