#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cdl/data.hpp"
#include "cdl/eval.hpp"
#include "cdl/net.hpp"
#include "cdl/trainer.hpp"

namespace cdl {

struct HiddenLayer {
  int width = 0;  // affine width
  Activation activation = Activation::rectifier;
};

struct NetConfig {
  std::vector<HiddenLayer> hidden{{128, Activation::max_feature_map}};
  int embedding_dim = 32;  // final layer, identity activation
};

struct EvalConfig {
  std::vector<double> far_points{0.001, 0.01, 0.1};
  std::vector<int> sigma_dims{1, 2, 4, 8, 16, 32};
  InterNormalization sigma_inter_norm = InterNormalization::samples;
};

// Everything a command needs. The run seed is forked into the data and
// trainer streams; trainer.seed and data.seed are not set directly.
struct Config {
  std::uint64_t seed = 1;
  NetConfig net;
  TrainConfig trainer;  // carries the heads and ranking sections
  SynthSpec data;
  EvalConfig eval;

  std::vector<LayerSpec> layer_specs(int input_dim) const;
  TrainConfig train_config() const;
  SynthSpec synth_spec() const;
};

struct ConfigKey {
  std::string name;  // "section.key", or "seed"
  std::string doc;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

const std::vector<ConfigKey>& config_schema();

// Grammar, one item per line:
//   # comment            ; comment
//   [section]
//   key = value
// Keys before the first section are top-level (only "seed"). Unknown
// sections or keys, duplicates and malformed values raise ConfigError with
// the line number. The result is validated.
Config parse_config(std::string_view text, const std::string& source = "config");
Config load_config(const std::filesystem::path& path);

// Sets "section.key" (or "seed") from text; ConfigError on unknown key or bad
// value. Does not re-validate.
void apply_override(Config& config, std::string_view key, std::string_view value);

// Raises ConfigError if any module precondition fails.
void validate(const Config& config);

// Canonical text form listing every key; parse_config(format_config(c)) == c.
std::string format_config(const Config& config);

}  // namespace cdl
