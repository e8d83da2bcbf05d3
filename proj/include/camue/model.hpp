#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camue/fusion.hpp"

namespace camue {

enum class GraphEncoderKind { kRgcn, kMlp };
enum class TextEncoderKind { kPooled, kPrecomputed };

inline std::string_view to_string(GraphEncoderKind k) { return k == GraphEncoderKind::kRgcn ? "rgcn" : "mlp"; }
inline std::string_view to_string(TextEncoderKind k) {
  return k == TextEncoderKind::kPooled ? "pooled" : "precomputed";
}

inline GraphEncoderKind parse_graph_encoder(std::string_view s) {
  if (s == "rgcn") return GraphEncoderKind::kRgcn;
  if (s == "mlp") return GraphEncoderKind::kMlp;
  throw ConfigError("unknown graph encoder '" + std::string(s) + "' (expected rgcn or mlp)");
}

inline TextEncoderKind parse_text_encoder(std::string_view s) {
  if (s == "pooled") return TextEncoderKind::kPooled;
  if (s == "precomputed") return TextEncoderKind::kPrecomputed;
  throw ConfigError("unknown text encoder '" + std::string(s) + "' (expected pooled or precomputed)");
}

inline bool uses_graph_branch(FusionMode m) { return m != FusionMode::kTextOnly; }
inline bool uses_text_branch(FusionMode m) { return m != FusionMode::kLinkOnly; }

struct ModelConfig {
  FusionMode mode = FusionMode::kCamue;
  GraphEncoderKind graph_encoder = GraphEncoderKind::kRgcn;
  TextEncoderKind text_encoder = TextEncoderKind::kPooled;
  std::size_t num_nodes = 0;
  std::size_t num_relations = 0;  // including reverse relations
  std::size_t text_dim = 0;
  std::size_t num_classes = 2;
  std::size_t hidden = 100;  // d₀ = d_h = d_fuse
  GateDims gate;
  double dropout = 0.1;
  double lambda = 0.1;

  void validate() const {
    FusionConfig{lambda, mode}.validate();
    if (num_nodes == 0) throw ConfigError("model needs at least one node");
    if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
    if (hidden == 0) throw ConfigError("hidden units must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (uses_text_branch(mode) && text_dim == 0) throw ConfigError("mode needs text features (text_dim is 0)");
    if (mode == FusionMode::kSimpleFusion && graph_encoder != GraphEncoderKind::kRgcn) {
      throw ConfigError("simple fusion is defined for the R-GCN graph encoder only");
    }
    if (uses_graph_branch(mode) && graph_encoder == GraphEncoderKind::kRgcn && num_relations == 0) {
      throw ConfigError("R-GCN needs at least one relation");
    }
  }
};

struct Model {
  ModelConfig config;
  std::optional<RgcnParams> rgcn;
  std::optional<AdjMlpParams> adj_mlp;
  std::optional<TextMlpParams> text_mlp;
  std::optional<GateParams> gate;  // present in camue and fixed-params modes; only camue reads it
  ClassifierParams classifier;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    auto append = [&out](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    if (rgcn) append(rgcn->parameters());
    if (adj_mlp) append(adj_mlp->parameters());
    if (text_mlp) append(text_mlp->parameters());
    if (gate) append(gate->parameters());
    append(classifier.parameters());
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto ps = const_cast<Model*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }
};

inline Model make_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const std::size_t h = cfg.hidden;
  if (cfg.mode == FusionMode::kSimpleFusion) {
    m.rgcn = make_rgcn(cfg.num_relations, RgcnDims{cfg.text_dim, h, h}, std::nullopt, rng);
  } else if (uses_graph_branch(cfg.mode)) {
    if (cfg.graph_encoder == GraphEncoderKind::kRgcn) {
      m.rgcn = make_rgcn(cfg.num_relations, RgcnDims{h, h, h}, cfg.num_nodes, rng);
    } else {
      m.adj_mlp = make_adj_mlp(cfg.num_nodes, MlpDims{0, h, h}, rng);
    }
  }
  if (uses_text_branch(cfg.mode) && cfg.mode != FusionMode::kSimpleFusion) {
    m.text_mlp = make_text_mlp(cfg.text_dim, MlpDims{0, h, h}, rng);
  }
  if (cfg.mode == FusionMode::kCamue || cfg.mode == FusionMode::kFixedParams) {
    m.gate = make_gate(cfg.num_nodes, cfg.text_dim, cfg.gate, rng);
  }
  m.classifier = make_classifier(h, cfg.num_classes, rng);
  return m;
}

struct ModelInputs {
  const NormalizedGraph* graph = nullptr;
  const DenseMatrix* text = nullptr;  // n×D_text base embeddings; may be null for link-only
};

struct ForwardVars {
  Var logits;
  std::optional<GateVars> gate;
};

inline ForwardVars forward(Tape& tape, const Model& model, const ModelInputs& in, const ForwardMode& mode) {
  const ModelConfig& cfg = model.config;
  if (in.graph == nullptr) throw ConfigError("forward: graph input is required");
  if (in.graph->n != cfg.num_nodes) {
    throw ShapeError("forward: model built for " + std::to_string(cfg.num_nodes) + " nodes, graph has " +
                     std::to_string(in.graph->n));
  }
  std::optional<Var> text;
  if (uses_text_branch(cfg.mode)) {
    if (in.text == nullptr) throw ConfigError("forward: mode needs text features");
    if (in.text->rows() != cfg.num_nodes || in.text->cols() != cfg.text_dim) {
      throw ShapeError("forward: text features " + in.text->shape_string() + ", model expects " +
                       std::to_string(cfg.num_nodes) + "x" + std::to_string(cfg.text_dim));
    }
    text = tape.constant(*in.text);
  }

  ForwardVars out;
  if (cfg.mode == FusionMode::kSimpleFusion) {
    out.logits = simple_fusion_forward(tape, *in.graph, *text, *model.rgcn, model.classifier, mode);
    return out;
  }

  std::optional<Var> graph_emb;
  if (uses_graph_branch(cfg.mode)) {
    graph_emb = model.rgcn ? rgcn_forward(tape, *in.graph, *model.rgcn, mode)
                           : adj_mlp_forward(tape, in.graph->summed_adjacency, *model.adj_mlp, mode);
  }
  std::optional<Var> text_emb;
  if (model.text_mlp) text_emb = text_mlp_forward(tape, *text, *model.text_mlp, mode);
  if (cfg.mode == FusionMode::kCamue) {
    out.gate = gate_forward(tape, in.graph->summed_adjacency, *text, *model.gate, mode);
  }
  const FusionConfig fusion{cfg.mode == FusionMode::kCamue || cfg.mode == FusionMode::kFixedParams ? cfg.lambda : 0.0,
                            cfg.mode};
  out.logits = fuse_and_classify(tape, graph_emb, text_emb, out.gate ? &*out.gate : nullptr, fusion, model.classifier);
  return out;
}

struct Prediction {
  DenseMatrix logits;
  std::vector<int> predicted;
  std::optional<GateOutput> gate;
};

inline std::vector<int> argmax_rows(const DenseMatrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

/// Evaluation-mode forward pass (no dropout).
inline Prediction predict(const Model& model, const ModelInputs& in) {
  Tape tape;
  ForwardVars v = forward(tape, model, in, ForwardMode{});
  Prediction p;
  p.logits = tape.value(v.logits);
  p.predicted = argmax_rows(p.logits);
  if (v.gate) p.gate = to_gate_output(tape.value(v.gate->probs));
  return p;
}

}  // namespace camue
