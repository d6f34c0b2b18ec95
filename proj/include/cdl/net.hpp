#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cdl/linalg.hpp"

namespace cdl {

enum class Activation {
  rectifier,
  // Max-feature-map: the affine output splits into two halves that compete
  // elementwise, so the activated width is half the affine width.
  max_feature_map,
  identity,
};

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct LayerSpec {
  int input_dim = 0;
  int output_dim = 0;  // affine width, before the activation
  Activation activation = Activation::identity;

  int activated_dim() const {
    return activation == Activation::max_feature_map ? output_dim / 2 : output_dim;
  }
  bool operator==(const LayerSpec&) const = default;
};

// Throws std::invalid_argument naming the offending layer if the chain is
// empty, has a non-positive dim, an odd max-feature-map width, or a broken link.
void validate_layer_chain(const std::vector<LayerSpec>& specs);

struct Layer {
  LayerSpec spec;
  Matrix weight;  // output_dim x input_dim
  Vector bias;    // output_dim
};

// The shared embedding trunk. Both modalities go through the same instance.
struct EmbeddingNet {
  std::vector<Layer> layers;

  int input_dim() const { return layers.front().spec.input_dim; }
  int embedding_dim() const { return layers.back().spec.activated_dim(); }
  std::vector<LayerSpec> specs() const;
  std::size_t parameter_count() const;
};

// Per-layer intermediates of one forward pass, rows are samples.
struct ForwardTape {
  struct Entry {
    Matrix input;
    Matrix pre_activation;
    // max-feature-map only: 1 where the first half won the comparison.
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> first_half_wins;
  };
  std::vector<Entry> entries;
};

struct LayerGrad {
  Matrix d_weight;
  Vector d_bias;
};

struct NetGrads {
  std::vector<LayerGrad> layers;

  static NetGrads zeros_like(const EmbeddingNet& net);
};

struct ForwardResult {
  Matrix embeddings;  // batch x embedding_dim
  ForwardTape tape;
};

struct BackwardResult {
  NetGrads grads;
  Matrix grad_inputs;
};

// Xavier-uniform weights (bound sqrt(6 / (in + out)) on the affine widths),
// zero biases.
EmbeddingNet init_net(const std::vector<LayerSpec>& specs, std::uint64_t seed);

ForwardResult forward(const EmbeddingNet& net, const Matrix& inputs);

// Embeddings only, without keeping a tape.
Matrix embed(const EmbeddingNet& net, const Matrix& inputs);

BackwardResult backward(const EmbeddingNet& net, const ForwardTape& tape,
                        const Matrix& grad_embeddings);

}  // namespace cdl
