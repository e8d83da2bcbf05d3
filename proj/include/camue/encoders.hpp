#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "camue/graph.hpp"
#include "camue/numerics/tape.hpp"
#include "camue/text.hpp"

namespace camue {

/// Training flag, dropout rate and the RNG that draws dropout masks.
struct ForwardMode {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

inline Var apply_dropout(Tape& tape, Var x, const ForwardMode& mode) {
  if (!mode.training || mode.dropout == 0.0) return x;
  if (mode.rng == nullptr) throw ConfigError("training-mode dropout needs an RNG");
  return tape.dropout(x, mode.dropout, true, *mode.rng);
}

/// Glorot-uniform fan_in×fan_out weight.
inline Parameter glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Parameter p{std::move(name), DenseMatrix(fan_in, fan_out)};
  for (double& v : p.value.data()) v = dist(rng);
  return p;
}

inline Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return Parameter{std::move(name), DenseMatrix(rows, cols)};
}

// ---------------------------------------------------------------------------
// Relational GCN with softmax relation attention

struct RgcnLayer {
  std::vector<Parameter> relation_weights;  // one d_in×d_out per relation
  Parameter self_weight;                    // d_in×d_out
  Parameter bias;                           // 1×d_out
  Parameter relation_logits;                // 1×m, softmaxed into attention weights
};

struct RgcnParams {
  std::optional<Parameter> node_embedding;  // n×d₀; absent when the input is a feature matrix
  std::vector<RgcnLayer> layers;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    if (node_embedding) out.push_back(&*node_embedding);
    for (auto& layer : layers) {
      for (auto& w : layer.relation_weights) out.push_back(&w);
      out.push_back(&layer.self_weight);
      out.push_back(&layer.bias);
      out.push_back(&layer.relation_logits);
    }
    return out;
  }
};

struct RgcnDims {
  std::size_t input = 100;
  std::size_t hidden = 100;
  std::size_t output = 100;
};

/// Two-layer R-GCN. With `n` set, layer 0 reads a learnable n×dims.input
/// embedding table; otherwise the caller supplies the input features.
inline RgcnParams make_rgcn(std::size_t num_relations, const RgcnDims& dims, std::optional<std::size_t> n, Rng& rng,
                            const std::string& prefix = "rgcn") {
  RgcnParams p;
  if (n) p.node_embedding = glorot(prefix + ".embedding", *n, dims.input, rng);
  const std::size_t in_dims[2] = {dims.input, dims.hidden};
  const std::size_t out_dims[2] = {dims.hidden, dims.output};
  for (std::size_t l = 0; l < 2; ++l) {
    RgcnLayer layer;
    const std::string lp = prefix + ".l" + std::to_string(l);
    for (std::size_t r = 0; r < num_relations; ++r) {
      layer.relation_weights.push_back(glorot(lp + ".rel" + std::to_string(r), in_dims[l], out_dims[l], rng));
    }
    layer.self_weight = glorot(lp + ".self", in_dims[l], out_dims[l], rng);
    layer.bias = zeros(lp + ".bias", 1, out_dims[l]);
    layer.relation_logits = zeros(lp + ".relation_logits", 1, num_relations);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Attention weights over relations for one layer (softmax of its logits).
inline std::vector<double> relation_attention(const RgcnParams& p, std::size_t layer) {
  const DenseMatrix& logits = p.layers.at(layer).relation_logits.value;
  std::vector<double> w(logits.cols());
  double mx = -INFINITY;
  for (double v : logits.data()) mx = std::max(mx, v);
  double z = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) z += (w[r] = std::exp(logits(0, r) - mx));
  for (double& v : w) v /= z;
  return w;
}

/// H⁽ˡ⁾ = ReLU(Σ_r softmax(a)_r Â_r H⁽ˡ⁻¹⁾ W_r + H⁽ˡ⁻¹⁾ W_self + b); the last layer stays linear.
inline Var rgcn_forward(Tape& tape, const NormalizedGraph& g, const RgcnParams& p, Var input,
                        const ForwardMode& mode) {
  if (tape.value(input).rows() != g.n) {
    throw ShapeError("rgcn_forward: input " + tape.value(input).shape_string() + " for a graph of " +
                     std::to_string(g.n) + " nodes");
  }
  Var h = input;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const RgcnLayer& layer = p.layers[l];
    if (layer.relation_weights.size() != g.relations.size()) {
      throw ShapeError("rgcn_forward: layer " + std::to_string(l) + " has " +
                       std::to_string(layer.relation_weights.size()) + " relation weights for " +
                       std::to_string(g.relations.size()) + " relations");
    }
    Var attention = tape.row_softmax(tape.param(layer.relation_logits));
    std::vector<Var> weights;
    for (const auto& w : layer.relation_weights) weights.push_back(tape.param(w));
    Var acc = tape.relational_mix(g.relations, attention, h, weights, tape.param(layer.self_weight));
    acc = tape.add_bias(acc, tape.param(layer.bias));
    if (l + 1 < p.layers.size()) {
      acc = tape.relu(acc);
      acc = apply_dropout(tape, acc, mode);
    }
    h = acc;
  }
  return h;
}

/// R-GCN over the learnable node-embedding table.
inline Var rgcn_forward(Tape& tape, const NormalizedGraph& g, const RgcnParams& p, const ForwardMode& mode) {
  if (!p.node_embedding) throw ConfigError("rgcn_forward: parameters carry no node-embedding table");
  return rgcn_forward(tape, g, p, tape.param(*p.node_embedding), mode);
}

// ---------------------------------------------------------------------------
// Three-layer MLPs (adjacency rows or text features in, fusion dim out)

struct ThreeLayerMlp {
  Parameter w1, b1, w2, b2, w3, b3;

  std::size_t input_width() const noexcept { return w1.value.rows(); }
  std::size_t output_width() const noexcept { return w3.value.cols(); }

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
};

struct AdjMlpParams : ThreeLayerMlp {};
struct TextMlpParams : ThreeLayerMlp {};

struct MlpDims {
  std::size_t input = 0;
  std::size_t hidden = 100;
  std::size_t output = 100;
};

namespace detail {

inline ThreeLayerMlp make_mlp(const MlpDims& dims, Rng& rng, const std::string& prefix) {
  if (dims.input == 0) throw ConfigError(prefix + ": input width must be positive");
  return ThreeLayerMlp{glorot(prefix + ".w1", dims.input, dims.hidden, rng), zeros(prefix + ".b1", 1, dims.hidden),
                       glorot(prefix + ".w2", dims.hidden, dims.hidden, rng), zeros(prefix + ".b2", 1, dims.hidden),
                       glorot(prefix + ".w3", dims.hidden, dims.output, rng), zeros(prefix + ".b3", 1, dims.output)};
}

// Layers 2 and 3 given the pre-activation of layer 1.
inline Var mlp_tail(Tape& tape, const ThreeLayerMlp& p, Var pre1, const ForwardMode& mode) {
  Var h1 = apply_dropout(tape, tape.relu(tape.add_bias(pre1, tape.param(p.b1))), mode);
  Var h2 = tape.relu(tape.add_bias(tape.matmul(h1, tape.param(p.w2)), tape.param(p.b2)));
  h2 = apply_dropout(tape, h2, mode);
  return tape.add_bias(tape.matmul(h2, tape.param(p.w3)), tape.param(p.b3));
}

}  // namespace detail

inline AdjMlpParams make_adj_mlp(std::size_t n, const MlpDims& dims, Rng& rng) {
  MlpDims d = dims;
  d.input = n;
  return AdjMlpParams{detail::make_mlp(d, rng, "adj_mlp")};
}

inline TextMlpParams make_text_mlp(std::size_t text_dim, const MlpDims& dims, Rng& rng) {
  MlpDims d = dims;
  d.input = text_dim;
  return TextMlpParams{detail::make_mlp(d, rng, "text_mlp")};
}

/// Row u of the binarized summed adjacency through ReLU, ReLU, linear layers.
inline Var adj_mlp_forward(Tape& tape, const SparseMatrix& summed_adjacency, const AdjMlpParams& p,
                           const ForwardMode& mode) {
  if (summed_adjacency.cols() != p.input_width()) {
    throw ShapeError("adj_mlp_forward: adjacency " + summed_adjacency.shape_string() + " for an MLP of input width " +
                     std::to_string(p.input_width()));
  }
  return detail::mlp_tail(tape, p, tape.spmm(summed_adjacency, tape.param(p.w1)), mode);
}

inline Var text_mlp_forward(Tape& tape, Var features, const TextMlpParams& p, const ForwardMode& mode) {
  if (tape.value(features).cols() != p.input_width()) {
    throw ShapeError("text_mlp_forward: features " + tape.value(features).shape_string() +
                     " for an MLP of input width " + std::to_string(p.input_width()));
  }
  return detail::mlp_tail(tape, p, tape.matmul(features, tape.param(p.w1)), mode);
}

}  // namespace camue
