#include "cdl/net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "cdl/error.hpp"
#include "cdl/rng.hpp"

namespace cdl {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::rectifier: return "relu";
    case Activation::max_feature_map: return "mfm";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::rectifier;
  if (name == "mfm") return Activation::max_feature_map;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) +
                              "' (expected relu, mfm or identity)");
}

void validate_layer_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    const std::string where = "layer " + std::to_string(i);
    if (s.input_dim <= 0 || s.output_dim <= 0) {
      throw std::invalid_argument(where + ": dims must be positive");
    }
    if (s.activation == Activation::max_feature_map && s.output_dim % 2 != 0) {
      throw std::invalid_argument(where + ": max-feature-map needs an even width, got " +
                                  std::to_string(s.output_dim));
    }
    if (i > 0 && specs[i - 1].activated_dim() != s.input_dim) {
      throw std::invalid_argument(where + ": input dim " + std::to_string(s.input_dim) +
                                  " does not match previous output " +
                                  std::to_string(specs[i - 1].activated_dim()));
    }
  }
}

std::vector<LayerSpec> EmbeddingNet::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers.size());
  for (const Layer& l : layers) out.push_back(l.spec);
  return out;
}

std::size_t EmbeddingNet::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

NetGrads NetGrads::zeros_like(const EmbeddingNet& net) {
  NetGrads g;
  g.layers.reserve(net.layers.size());
  for (const Layer& l : net.layers) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                        Vector::Zero(l.bias.size())});
  }
  return g;
}

EmbeddingNet init_net(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  validate_layer_chain(specs);
  Rng rng = make_rng(seed, "net.init");
  EmbeddingNet net;
  for (const LayerSpec& s : specs) {
    const double bound = std::sqrt(6.0 / static_cast<double>(s.input_dim + s.output_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{s, Matrix(s.output_dim, s.input_dim), Vector::Zero(s.output_dim)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

Matrix affine(const Layer& layer, const Matrix& x) {
  Matrix z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

void check_input(const EmbeddingNet& net, std::size_t i, const Matrix& x) {
  const int expected = net.layers[i].spec.input_dim;
  if (x.cols() != expected) {
    throw DataError("layer " + std::to_string(i) + ": expected input width " +
                    std::to_string(expected) + ", got " + std::to_string(x.cols()));
  }
}

}  // namespace

ForwardResult forward(const EmbeddingNet& net, const Matrix& inputs) {
  if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
  ForwardResult out;
  Matrix x = inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    check_input(net, i, x);
    const Layer& layer = net.layers[i];
    ForwardTape::Entry entry;
    entry.pre_activation = affine(layer, x);
    const Matrix& z = entry.pre_activation;
    Matrix a;
    switch (layer.spec.activation) {
      case Activation::rectifier:
        a = z.cwiseMax(0.0);
        break;
      case Activation::max_feature_map: {
        const Eigen::Index half = z.cols() / 2;
        entry.first_half_wins =
            z.leftCols(half).array() >= z.rightCols(half).array();
        a = z.leftCols(half).cwiseMax(z.rightCols(half));
        break;
      }
      case Activation::identity:
        a = z;
        break;
    }
    entry.input = std::move(x);
    out.tape.entries.push_back(std::move(entry));
    x = std::move(a);
  }
  out.embeddings = std::move(x);
  return out;
}

Matrix embed(const EmbeddingNet& net, const Matrix& inputs) {
  return forward(net, inputs).embeddings;
}

BackwardResult backward(const EmbeddingNet& net, const ForwardTape& tape,
                        const Matrix& grad_embeddings) {
  if (tape.entries.size() != net.layers.size()) {
    throw DataError("backward: tape has " + std::to_string(tape.entries.size()) +
                    " layers, network has " + std::to_string(net.layers.size()));
  }
  const Eigen::Index batch = tape.entries.front().input.rows();
  if (grad_embeddings.rows() != batch || grad_embeddings.cols() != net.embedding_dim()) {
    throw DataError("backward: gradient shape " + std::to_string(grad_embeddings.rows()) + "x" +
                    std::to_string(grad_embeddings.cols()) + " does not match tape (" +
                    std::to_string(batch) + "x" + std::to_string(net.embedding_dim()) + ")");
  }

  BackwardResult out;
  out.grads.layers.resize(net.layers.size());
  Matrix grad = grad_embeddings;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const Layer& layer = net.layers[k];
    const ForwardTape::Entry& entry = tape.entries[k];
    if (entry.pre_activation.cols() != layer.spec.output_dim ||
        entry.input.cols() != layer.spec.input_dim || entry.input.rows() != batch) {
      throw DataError("backward: stale tape at layer " + std::to_string(k));
    }
    Matrix dz;
    switch (layer.spec.activation) {
      case Activation::rectifier:
        dz = (entry.pre_activation.array() > 0.0).select(grad, 0.0);
        break;
      case Activation::max_feature_map: {
        const Eigen::Index half = layer.spec.output_dim / 2;
        dz = Matrix::Zero(batch, layer.spec.output_dim);
        dz.leftCols(half) = entry.first_half_wins.select(grad, 0.0);
        dz.rightCols(half) = entry.first_half_wins.select(0.0, grad);
        break;
      }
      case Activation::identity:
        dz = std::move(grad);
        break;
    }
    out.grads.layers[k].d_weight = dz.transpose() * entry.input;
    out.grads.layers[k].d_bias = dz.colwise().sum().transpose();
    grad = dz * layer.weight;
  }
  out.grad_inputs = std::move(grad);
  return out;
}

}  // namespace cdl
