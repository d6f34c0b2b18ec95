#pragma once

#include <filesystem>
#include <string>

#include "cdl/trainer.hpp"

namespace cdl {

// Text checkpoint, format tag "cdl-checkpoint v1". Holds the layer specs, all
// trunk parameters, both heads with gamma and their hyperparameters, the
// momentum buffers, the iteration counter and the batch stream state. Doubles
// use shortest round-trip decimal, so load(save(s)) is bit-exact and saving a
// loaded checkpoint reproduces the file byte for byte.
//
//   cdl-checkpoint v1
//   iteration <t>
//   layers <L>
//   layer <in> <out> <relu|mfm|identity>          (L times)
//   matrix <name> <rows> <cols>                     then <rows> lines
//   vector <name> <n>                               then one line
//   heads lambda <v> alpha1 <v> alpha2 <v> mu <v> softmax_weight <v>
//   rng <mt19937_64 state>
//   end
//
// Matrices appear in the order: per layer weight_<k>, bias_<k>; w_n, w_v,
// gamma; then the velocity buffers vel_weight_<k>, vel_bias_<k>, vel_w_n,
// vel_w_v.
std::string serialize_checkpoint(const TrainState& state);
TrainState parse_checkpoint(const std::string& text, const std::string& source = "checkpoint");

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace cdl
