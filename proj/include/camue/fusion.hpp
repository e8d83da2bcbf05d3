#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "camue/encoders.hpp"

namespace camue {

enum class FusionMode { kCamue, kFixedParams, kSimpleFusion, kTextOnly, kLinkOnly };

inline std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kCamue: return "camue";
    case FusionMode::kFixedParams: return "fixed";
    case FusionMode::kSimpleFusion: return "simple";
    case FusionMode::kTextOnly: return "text";
    case FusionMode::kLinkOnly: return "link";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "camue") return FusionMode::kCamue;
  if (s == "fixed" || s == "fixed-params") return FusionMode::kFixedParams;
  if (s == "simple" || s == "simple-fusion") return FusionMode::kSimpleFusion;
  if (s == "text" || s == "text-only") return FusionMode::kTextOnly;
  if (s == "link" || s == "link-only") return FusionMode::kLinkOnly;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected camue, fixed, simple, text or link)");
}

struct FusionConfig {
  double lambda = 0.1;
  FusionMode mode = FusionMode::kCamue;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative, got " + std::to_string(lambda));
  }
};

/// Attention-gate weights. W¹ is split into the part multiplying the sparse
/// summed-adjacency row and the part multiplying the text embedding.
struct GateParams {
  Parameter w1_graph;  // n×h₁
  Parameter w1_text;   // D_text×h₁
  Parameter w2;        // h₁×h₂
  Parameter w3;        // h₂×2, columns give e_α and e_β

  std::vector<Parameter*> parameters() { return {&w1_graph, &w1_text, &w2, &w3}; }
};

/// Gate logits are squashed into ±15, so |e_α − e_β| ≤ 30 and both weights stay
/// at least 9e-14: α and β remain strictly inside (0, 1) in double precision.
inline constexpr double kGateLogitBound = 15.0;

struct GateDims {
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
};

/// W³ starts at zero, so a fresh gate outputs α = β = 0.5 for everyone.
inline GateParams make_gate(std::size_t n, std::size_t text_dim, const GateDims& dims, Rng& rng) {
  return GateParams{glorot("gate.w1_graph", n, dims.hidden1, rng), glorot("gate.w1_text", text_dim, dims.hidden1, rng),
                    glorot("gate.w2", dims.hidden1, dims.hidden2, rng), zeros("gate.w3", dims.hidden2, 2)};
}

/// Per-user modality weights; alpha weights the graph, beta the text.
struct GateOutput {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t size() const noexcept { return alpha.size(); }
};

/// Tape handles for the gate: probs is n×2, alpha/beta its columns.
struct GateVars {
  Var probs;
  Var alpha;
  Var beta;
};

inline GateVars gate_forward(Tape& tape, const SparseMatrix& summed_adjacency, Var text_features, const GateParams& p,
                             const ForwardMode& mode) {
  const DenseMatrix& text = tape.value(text_features);
  if (summed_adjacency.rows() != text.rows() || summed_adjacency.cols() != p.w1_graph.value.rows() ||
      text.cols() != p.w1_text.value.rows()) {
    throw ShapeError("gate_forward: adjacency " + summed_adjacency.shape_string() + " and text " + text.shape_string() +
                     " do not fit W1 parts " + p.w1_graph.value.shape_string() + " / " +
                     p.w1_text.value.shape_string());
  }
  if (p.w3.value.cols() != 2) throw ShapeError("gate_forward: W3 must have exactly 2 columns");
  Var pre1 = tape.add(tape.spmm(summed_adjacency, tape.param(p.w1_graph)),
                      tape.matmul(text_features, tape.param(p.w1_text)));
  Var h1 = apply_dropout(tape, tape.relu(pre1), mode);
  Var h2 = apply_dropout(tape, tape.relu(tape.matmul(h1, tape.param(p.w2))), mode);
  Var logits = tape.soft_clip(tape.matmul(h2, tape.param(p.w3)), kGateLogitBound);
  Var probs = tape.row_softmax(logits);
  return GateVars{probs, tape.column(probs, 0), tape.column(probs, 1)};
}

inline GateOutput to_gate_output(const DenseMatrix& probs) {
  GateOutput out;
  out.alpha.resize(probs.rows());
  out.beta.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out.alpha[i] = probs(i, 0);
    out.beta[i] = probs(i, 1);
  }
  return out;
}

/// Gate evaluated without dropout.
inline GateOutput gate_forward(const SparseMatrix& summed_adjacency, const DenseMatrix& text_features,
                               const GateParams& p) {
  Tape tape;
  GateVars v = gate_forward(tape, summed_adjacency, tape.constant(text_features), p, ForwardMode{});
  return to_gate_output(tape.value(v.probs));
}

struct ClassifierParams {
  Parameter weight;  // d_fuse×C
  Parameter bias;    // 1×C

  std::size_t num_classes() const noexcept { return weight.value.cols(); }
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

inline ClassifierParams make_classifier(std::size_t input_dim, std::size_t classes, Rng& rng) {
  if (classes < 2) throw ConfigError("classifier needs at least 2 classes, got " + std::to_string(classes));
  return ClassifierParams{glorot("classifier.weight", input_dim, classes, rng), zeros("classifier.bias", 1, classes)};
}

inline Var classify(Tape& tape, Var features, const ClassifierParams& cls) {
  return tape.add_bias(tape.matmul(features, tape.param(cls.weight)), tape.param(cls.bias));
}

/// z_u = (α_u + λ)·g_u + (β_u + λ)·t_u, then the linear head.
/// Fixed-params uses α = β = 0.5; link-only and text-only drop the other branch and λ.
/// `gate` is required only in camue mode; missing branches are required only when used.
inline Var fuse_and_classify(Tape& tape, std::optional<Var> graph_emb, std::optional<Var> text_emb,
                             const GateVars* gate, const FusionConfig& cfg, const ClassifierParams& cls) {
  cfg.validate();
  auto need = [](const std::optional<Var>& v, const char* what) {
    if (!v) throw ConfigError(std::string("fuse_and_classify: mode needs the ") + what + " embedding");
    return *v;
  };
  Var z;
  switch (cfg.mode) {
    case FusionMode::kLinkOnly:
      z = need(graph_emb, "graph");
      break;
    case FusionMode::kTextOnly:
      z = need(text_emb, "text");
      break;
    case FusionMode::kFixedParams: {
      Var g = need(graph_emb, "graph");
      Var t = need(text_emb, "text");
      if (!tape.value(g).same_shape(tape.value(t))) {
        throw ShapeError("fuse_and_classify: graph " + tape.value(g).shape_string() + " vs text " +
                         tape.value(t).shape_string());
      }
      z = tape.scale(tape.add(g, t), 0.5 + cfg.lambda);
      break;
    }
    case FusionMode::kCamue: {
      Var g = need(graph_emb, "graph");
      Var t = need(text_emb, "text");
      if (gate == nullptr) throw ConfigError("fuse_and_classify: camue mode needs gate outputs");
      if (!tape.value(g).same_shape(tape.value(t))) {
        throw ShapeError("fuse_and_classify: graph " + tape.value(g).shape_string() + " vs text " +
                         tape.value(t).shape_string());
      }
      Var wg = tape.add_scalar(gate->alpha, cfg.lambda);
      Var wt = tape.add_scalar(gate->beta, cfg.lambda);
      z = tape.add(tape.scale_rows(wg, g), tape.scale_rows(wt, t));
      break;
    }
    case FusionMode::kSimpleFusion:
      z = need(graph_emb, "graph");  // text already entered through the R-GCN input
      break;
  }
  return classify(tape, z, cls);
}

/// Baseline: the R-GCN reads the text features as its layer-0 input.
inline Var simple_fusion_forward(Tape& tape, const NormalizedGraph& g, Var text_features, const RgcnParams& rgcn,
                                 const ClassifierParams& cls, const ForwardMode& mode) {
  if (rgcn.node_embedding) throw ConfigError("simple fusion R-GCN must not carry a node-embedding table");
  return classify(tape, rgcn_forward(tape, g, rgcn, text_features, mode), cls);
}

inline std::pair<double, double> contribution_of(const GateOutput& gate, std::size_t user) {
  if (user >= gate.size()) {
    throw ConfigError("user " + std::to_string(user) + " outside [0, " + std::to_string(gate.size()) + ")");
  }
  return {gate.alpha[user], gate.beta[user]};
}

inline bool graph_dominant(const GateOutput& gate, std::size_t user) {
  auto [a, b] = contribution_of(gate, user);
  return a > b;
}

}  // namespace camue
