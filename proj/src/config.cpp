#include "cdl/config.hpp"

#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "cdl/error.hpp"
#include "cdl/rng.hpp"
#include "cdl/text.hpp"

namespace cdl {

std::vector<LayerSpec> Config::layer_specs(int input_dim) const {
  std::vector<LayerSpec> specs;
  int in = input_dim;
  for (const HiddenLayer& h : net.hidden) {
    specs.push_back({in, h.width, h.activation});
    in = specs.back().activated_dim();
  }
  specs.push_back({in, net.embedding_dim, Activation::identity});
  return specs;
}

TrainConfig Config::train_config() const {
  TrainConfig t = trainer;
  t.seed = fork_seed(seed, "trainer");
  return t;
}

SynthSpec Config::synth_spec() const {
  SynthSpec s = data;
  s.seed = fork_seed(seed, "data");
  return s;
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError(std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

double to_real(std::string_view key, std::string_view v) {
  const auto d = parse_double(v);
  if (!d) bad_value(key, v, "a number");
  return *d;
}

int to_int(std::string_view key, std::string_view v) {
  const auto i = parse_int(v);
  if (!i || *i < std::numeric_limits<int>::min() || *i > std::numeric_limits<int>::max()) {
    bad_value(key, v, "an integer");
  }
  return static_cast<int>(*i);
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> list_items(std::string_view v) {
  std::vector<std::string_view> out;
  v = trim(v);
  if (v.empty()) return out;
  for (std::string_view item : split(v, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
ConfigKey real_key(std::string name, std::string doc, T Config::*section, double T::*field) {
  return {name, std::move(doc),
          [=](Config& c, std::string_view v) { (c.*section).*field = to_real(name, v); },
          [=](const Config& c) { return format_double((c.*section).*field); }};
}

template <typename T>
ConfigKey int_key(std::string name, std::string doc, T Config::*section, int T::*field) {
  return {name, std::move(doc),
          [=](Config& c, std::string_view v) { (c.*section).*field = to_int(name, v); },
          [=](const Config& c) { return std::to_string((c.*section).*field); }};
}

ConfigKey heads_key(std::string name, std::string doc, double HeadsParams::*field) {
  return {name, std::move(doc),
          [=](Config& c, std::string_view v) { c.trainer.heads.*field = to_real(name, v); },
          [=](const Config& c) { return format_double(c.trainer.heads.*field); }};
}

std::vector<ConfigKey> build_schema() {
  std::vector<ConfigKey> s;
  s.push_back({"seed", "run seed; every module forks its own stream from it",
               [](Config& c, std::string_view v) {
                 const auto i = parse_int(v);
                 if (!i || *i < 0) bad_value("seed", v, "a non-negative integer");
                 c.seed = static_cast<std::uint64_t>(*i);
               },
               [](const Config& c) { return std::to_string(c.seed); }});

  s.push_back({"net.hidden", "hidden layers as width:activation, comma separated (relu|mfm|identity)",
               [](Config& c, std::string_view v) {
                 std::vector<HiddenLayer> layers;
                 for (std::string_view item : list_items(v)) {
                   const auto colon = item.find(':');
                   if (colon == std::string_view::npos) bad_value("net.hidden", item, "width:activation");
                   HiddenLayer h;
                   h.width = to_int("net.hidden", item.substr(0, colon));
                   try {
                     h.activation = parse_activation(trim(item.substr(colon + 1)));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("net.hidden: ") + e.what());
                   }
                   layers.push_back(h);
                 }
                 c.net.hidden = std::move(layers);
               },
               [](const Config& c) {
                 std::string out;
                 for (const HiddenLayer& h : c.net.hidden) {
                   if (!out.empty()) out += ", ";
                   out += std::to_string(h.width) + ":" + std::string(activation_name(h.activation));
                 }
                 return out;
               }});
  s.push_back(int_key("net.embedding_dim", "embedding width m", &Config::net, &NetConfig::embedding_dim));

  s.push_back(heads_key("heads.lambda", "trace-norm strength", &HeadsParams::lambda));
  s.push_back(heads_key("heads.alpha1", "weight of the trace-norm term", &HeadsParams::alpha1));
  s.push_back(heads_key("heads.alpha2", "weight of the orthogonality term", &HeadsParams::alpha2));
  s.push_back(heads_key("heads.mu", "ridge added before the gamma square root", &HeadsParams::mu));
  s.push_back(heads_key("heads.softmax_weight", "weight of the softmax term", &HeadsParams::softmax_weight));
  s.push_back(real_key("heads.init_std", "Gaussian std of the heads at init, <= 0 for 1/sqrt(m)",
                       &Config::trainer, &TrainConfig::heads_init_std));

  s.push_back({"ranking.margin", "triplet margin on unit-length embeddings",
               [](Config& c, std::string_view v) { c.trainer.ranking.margin = to_real("ranking.margin", v); },
               [](const Config& c) { return format_double(c.trainer.ranking.margin); }});
  s.push_back({"ranking.max_triplets_per_anchor", "cap on mined triplets per anchor",
               [](Config& c, std::string_view v) {
                 const int n = to_int("ranking.max_triplets_per_anchor", v);
                 if (n <= 0) bad_value("ranking.max_triplets_per_anchor", v, "a positive integer");
                 c.trainer.ranking.max_triplets_per_anchor = static_cast<std::size_t>(n);
               },
               [](const Config& c) { return std::to_string(c.trainer.ranking.max_triplets_per_anchor); }});

  s.push_back(real_key("trainer.lambda1", "weight of the relevance loss", &Config::trainer, &TrainConfig::lambda1));
  s.push_back(real_key("trainer.lambda2_start", "ranking weight at the first iteration", &Config::trainer,
                       &TrainConfig::lambda2_start));
  s.push_back(real_key("trainer.lambda2_end", "ranking weight at the last iteration", &Config::trainer,
                       &TrainConfig::lambda2_end));
  s.push_back(real_key("trainer.lr_start", "initial learning rate", &Config::trainer, &TrainConfig::lr_start));
  s.push_back(real_key("trainer.lr_end", "final learning rate (geometric decay)", &Config::trainer,
                       &TrainConfig::lr_end));
  s.push_back(real_key("trainer.momentum", "heavy-ball momentum", &Config::trainer, &TrainConfig::momentum));
  s.push_back(real_key("trainer.weight_decay", "L2 decay on trunk and heads", &Config::trainer,
                       &TrainConfig::weight_decay));
  s.push_back(int_key("trainer.identities_per_batch", "identities per batch (P)", &Config::trainer,
                      &TrainConfig::identities_per_batch));
  s.push_back(int_key("trainer.samples_per_modality", "samples per identity and modality (K)",
                      &Config::trainer, &TrainConfig::samples_per_modality));
  s.push_back(int_key("trainer.iterations", "total training iterations", &Config::trainer,
                      &TrainConfig::iterations));
  s.push_back(int_key("trainer.checkpoint_every", "periodic checkpoint interval, 0 disables",
                      &Config::trainer, &TrainConfig::checkpoint_every));
  s.push_back({"trainer.include_unpaired", "let single-modality identities into batches",
               [](Config& c, std::string_view v) {
                 c.trainer.include_unpaired = to_bool("trainer.include_unpaired", v);
               },
               [](const Config& c) { return std::string(c.trainer.include_unpaired ? "true" : "false"); }});

  s.push_back(int_key("data.train_identities", "training identities", &Config::data,
                      &SynthSpec::train_identities));
  s.push_back(int_key("data.test_identities", "held-out identities", &Config::data,
                      &SynthSpec::test_identities));
  s.push_back(int_key("data.samples_per_identity", "samples per identity and modality", &Config::data,
                      &SynthSpec::samples_per_identity));
  s.push_back(int_key("data.latent_dim", "latent identity dimension", &Config::data, &SynthSpec::latent_dim));
  s.push_back(int_key("data.input_dim", "observed feature dimension", &Config::data, &SynthSpec::input_dim));
  s.push_back(real_key("data.modality_transform_scale", "size of the modality-1 transform perturbation",
                       &Config::data, &SynthSpec::modality_transform_scale));
  s.push_back(real_key("data.noise_sigma", "observation noise std", &Config::data, &SynthSpec::noise_sigma));

  s.push_back({"eval.far_points", "FAR levels for VR@FAR, comma separated",
               [](Config& c, std::string_view v) {
                 std::vector<double> pts;
                 for (std::string_view item : list_items(v)) pts.push_back(to_real("eval.far_points", item));
                 c.eval.far_points = std::move(pts);
               },
               [](const Config& c) {
                 std::string out;
                 for (double d : c.eval.far_points) {
                   if (!out.empty()) out += ", ";
                   out += format_double(d);
                 }
                 return out;
               }});
  s.push_back({"eval.sigma_dims", "PCA dimensions for the sigma curves, comma separated",
               [](Config& c, std::string_view v) {
                 std::vector<int> dims;
                 for (std::string_view item : list_items(v)) dims.push_back(to_int("eval.sigma_dims", item));
                 c.eval.sigma_dims = std::move(dims);
               },
               [](const Config& c) {
                 std::string out;
                 for (int d : c.eval.sigma_dims) {
                   if (!out.empty()) out += ", ";
                   out += std::to_string(d);
                 }
                 return out;
               }});
  s.push_back({"eval.sigma_inter_norm", "sigma_inter averaging: samples (1/N) or classes (1/c)",
               [](Config& c, std::string_view v) {
                 v = trim(v);
                 if (v == "samples") {
                   c.eval.sigma_inter_norm = InterNormalization::samples;
                 } else if (v == "classes") {
                   c.eval.sigma_inter_norm = InterNormalization::classes;
                 } else {
                   bad_value("eval.sigma_inter_norm", v, "samples or classes");
                 }
               },
               [](const Config& c) {
                 return std::string(c.eval.sigma_inter_norm == InterNormalization::samples ? "samples"
                                                                                          : "classes");
               }});
  return s;
}

const ConfigKey* find_key(std::string_view name) {
  for (const ConfigKey& k : config_schema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

void apply_override(Config& config, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_key(trim(key));
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  k->set(config, trim(value));
}

Config parse_config(std::string_view text, const std::string& source) {
  Config c;
  std::string section;
  std::set<std::string> seen;
  const std::vector<std::string_view> lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string at = source + ":" + std::to_string(i + 1) + ": ";
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const ConfigKey& k : config_schema()) {
        if (k.name.rfind(section + ".", 0) == 0) known = true;
      }
      if (!known) throw ConfigError(at + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(at + "expected 'key = value'");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!seen.insert(full).second) throw ConfigError(at + "duplicate key '" + full + "'");
    try {
      apply_override(c, full, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
  validate(c);
  return c;
}

Config load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

void validate(const Config& c) {
  try {
    validate_layer_chain(c.layer_specs(c.data.input_dim));
    validate(c.trainer);
    validate(c.data);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.net.embedding_dim <= 0) throw ConfigError("net.embedding_dim must be positive");
  for (double f : c.eval.far_points) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("eval.far_points entries must lie in (0, 1]");
  }
  for (int d : c.eval.sigma_dims) {
    if (d < 1 || d > c.net.embedding_dim) {
      throw ConfigError("eval.sigma_dims entries must lie in [1, net.embedding_dim]");
    }
  }
}

std::string format_config(const Config& config) {
  std::string out;
  std::string section;
  for (const ConfigKey& k : config_schema()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += "# " + k.doc + "\n";
    out += key + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace cdl
