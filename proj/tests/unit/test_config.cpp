#include <gtest/gtest.h>

#include "cdl/config.hpp"
#include "cdl/error.hpp"

using namespace cdl;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const Config c = parse_config("");
  EXPECT_EQ(format_config(c), format_config(Config{}));
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.net.embedding_dim, 32);
}

TEST(Config, ParsesSectionsCommentsAndLists) {
  const Config c = parse_config(
      "# run\nseed = 9\n\n[net]\nhidden = 64:mfm, 16:relu\nembedding_dim = 8\n; comment\n"
      "[trainer]\niterations = 12\ninclude_unpaired = false\n"
      "[heads]\nlambda = 0.5\n[eval]\nfar_points = 0.01, 0.2\nsigma_dims = 1, 8\n"
      "sigma_inter_norm = classes\n");
  EXPECT_EQ(c.seed, 9u);
  ASSERT_EQ(c.net.hidden.size(), 2u);
  EXPECT_EQ(c.net.hidden[0].width, 64);
  EXPECT_EQ(c.net.hidden[1].activation, Activation::rectifier);
  EXPECT_EQ(c.trainer.iterations, 12);
  EXPECT_FALSE(c.trainer.include_unpaired);
  EXPECT_EQ(c.trainer.heads.lambda, 0.5);
  EXPECT_EQ(c.eval.far_points, (std::vector<double>{0.01, 0.2}));
  EXPECT_EQ(c.eval.sigma_inter_norm, InterNormalization::classes);
}

TEST(Config, FormatRoundTrips) {
  Config c;
  c.seed = 123;
  c.trainer.lr_start = 0.1 + 0.2;  // not a short decimal
  c.net.hidden = {{10, Activation::identity}, {8, Activation::max_feature_map}};
  c.eval.sigma_dims = {1, 3};
  const std::string text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(text).trainer.lr_start, 0.1 + 0.2);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("[trainer]\nbogus = 1\n").find("cfg:2:"), std::string::npos);
  EXPECT_NE(error_of("[trainer]\niterations = 1\niterations = 2\n").find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of("[nope]\n").find("cfg:1:"), std::string::npos);
  EXPECT_NE(error_of("[trainer]\niterations = ten\n").find("cfg:2:"), std::string::npos);
  EXPECT_NE(error_of("iterations = 3\n").find("unknown config key"), std::string::npos);
  EXPECT_NE(error_of("[net\n").find("unterminated"), std::string::npos);
  EXPECT_NE(error_of("[net]\nhidden = 10\n").find("width:activation"), std::string::npos);
  EXPECT_NE(error_of("[net]\nhidden = 10:tanh\n").find("tanh"), std::string::npos);
  EXPECT_NE(error_of("[trainer]\ninclude_unpaired = maybe\n").find("true or false"),
            std::string::npos);
  EXPECT_NE(error_of("[trainer]\nwhat\n").find("key = value"), std::string::npos);
}

TEST(Config, ValidatesModulePreconditions) {
  EXPECT_THROW(parse_config("[data]\ntrain_identities = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[net]\nhidden = 7:mfm\n"), ConfigError);
  EXPECT_THROW(parse_config("[trainer]\nmomentum = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[heads]\nmu = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[eval]\nfar_points = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[eval]\nsigma_dims = 64\n"), ConfigError);
  EXPECT_THROW(parse_config("[ranking]\nmargin = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
}

TEST(Config, OverridesAndDerivedObjects) {
  Config c;
  apply_override(c, "trainer.iterations", "5");
  apply_override(c, "net.hidden", "20:relu");
  apply_override(c, "seed", "4");
  EXPECT_THROW(apply_override(c, "trainer.nope", "1"), ConfigError);
  EXPECT_EQ(c.trainer.iterations, 5);
  const std::vector<LayerSpec> specs = c.layer_specs(64);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0], (LayerSpec{64, 20, Activation::rectifier}));
  EXPECT_EQ(specs[1], (LayerSpec{20, 32, Activation::identity}));
  EXPECT_NE(c.train_config().seed, c.synth_spec().seed);
  EXPECT_EQ(c.train_config().seed, Config(c).train_config().seed);
}

TEST(Config, EverySchemaKeyRoundTripsAlone) {
  const Config defaults;
  for (const ConfigKey& k : config_schema()) {
    Config c;
    k.set(c, k.get(defaults));
    EXPECT_EQ(format_config(c), format_config(defaults)) << k.name;
    EXPECT_FALSE(k.doc.empty()) << k.name;
  }
}
