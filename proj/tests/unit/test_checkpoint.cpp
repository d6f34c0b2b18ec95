#include <gtest/gtest.h>

#include "cdl/checkpoint.hpp"
#include "cdl/error.hpp"
#include "test_support.hpp"

using namespace cdl;
using cdl::testing::TempDir;

namespace {

TrainState trained_state() {
  SynthSpec s;
  s.train_identities = 5;
  s.test_identities = 1;
  s.samples_per_identity = 2;
  s.latent_dim = 2;
  s.input_dim = 4;
  const Dataset data = generate(s).train;
  TrainConfig c;
  c.iterations = 8;
  c.identities_per_batch = 3;
  c.lr_start = 0.02;
  c.lr_end = 0.01;
  c.heads.lambda = 0.3;
  return fit(data, {{4, 6, Activation::max_feature_map}, {3, 2, Activation::identity}}, c).state;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const TrainState s = trained_state();
  const std::string text = serialize_checkpoint(s);
  const TrainState back = parse_checkpoint(text);
  EXPECT_EQ(serialize_checkpoint(back), text);
  EXPECT_EQ(back.net.specs(), s.net.specs());
  EXPECT_EQ(back.net.layers[1].weight, s.net.layers[1].weight);
  EXPECT_EQ(back.heads.gamma, s.heads.gamma);
  EXPECT_EQ(back.heads.params.lambda, 0.3);
  EXPECT_EQ(back.velocity.w_v, s.velocity.w_v);
  EXPECT_EQ(back.iteration, 8);
  Rng a = s.batch_rng, b = back.batch_rng;
  EXPECT_EQ(a(), b());
}

TEST(Checkpoint, FileRoundTrip) {
  const TrainState s = trained_state();
  TempDir dir("ckpt");
  save_checkpoint(s, dir / "c.txt");
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir / "c.txt")), serialize_checkpoint(s));
  EXPECT_THROW(load_checkpoint(dir / "none.txt"), IoError);
}

TEST(Checkpoint, CorruptionReportsLine) {
  const std::string text = serialize_checkpoint(trained_state());
  EXPECT_THROW(parse_checkpoint("not a checkpoint\n"), DataError);
  EXPECT_THROW(parse_checkpoint(text.substr(0, text.size() / 2)), DataError);
  std::string bad = text;
  const auto pos = bad.find("layer 4 6 mfm");
  ASSERT_NE(pos, std::string::npos);
  bad.replace(pos, 13, "layer 4 5 mfm");
  try {
    parse_checkpoint(bad, "ck");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("ck:", 0), 0u) << e.what();
  }
  std::string trailing = text;
  trailing.replace(trailing.rfind("end"), 3, "fin");
  EXPECT_THROW(parse_checkpoint(trailing), DataError);
}
