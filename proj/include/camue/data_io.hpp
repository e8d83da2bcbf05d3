#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "camue/graph.hpp"
#include "camue/text.hpp"
#include "camue/training.hpp"

namespace camue {

struct DatasetMetadata {
  std::string task;
  std::vector<std::string> class_names;
  std::vector<std::string> relation_names;  // forward relations as declared in the edge file
};

struct DatasetBundle {
  HeteroGraph graph;
  std::vector<Tokens> tokens;           // raw text per user; may be empty
  std::optional<DenseMatrix> features;  // precomputed text features, when supplied
  std::vector<int> labels;              // kUnlabeled for unlabeled users
  DatasetMetadata meta;

  std::size_t size() const noexcept { return graph.n; }

  void validate() const {
    const std::size_t n = graph.n;
    if (labels.size() != n) {
      throw IngestError("dataset has " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " users");
    }
    if (!tokens.empty() && tokens.size() != n) {
      throw IngestError("dataset has text for " + std::to_string(tokens.size()) + " users, expected " +
                        std::to_string(n));
    }
    if (features && features->rows() != n) {
      throw IngestError("text features have " + std::to_string(features->rows()) + " rows, expected " +
                        std::to_string(n));
    }
    std::set<int> present;
    for (int y : labels) {
      if (y == kUnlabeled) continue;
      if (y < 0 || static_cast<std::size_t>(y) >= meta.class_names.size()) {
        throw IngestError("label " + std::to_string(y) + " has no class name");
      }
      present.insert(y);
    }
    if (present.size() < 2) throw IngestError("at least 2 classes must be present among labeled users");
  }
};

// ---------------------------------------------------------------------------
// TSV readers and writers

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

inline std::size_t parse_node_id(std::string_view field, std::size_t n, const std::string& where) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw IngestError("malformed node id '" + std::string(field) + "' " + where);
  }
  if (v >= n) throw IngestError("node id " + std::to_string(v) + " >= n=" + std::to_string(n) + " " + where);
  return v;
}

/// Byte offset of the first invalid UTF-8 sequence, if any.
inline std::optional<std::size_t> find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  while (i < s.size()) {
    const unsigned char c = byte(i);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2, cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3, cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4, cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((byte(i + k) & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads "src<TAB>dst<TAB>relation" lines into a graph over `relations`.
inline HeteroGraph load_edges(const std::string& path, std::size_t n, std::span<const std::string> relations,
                              const GraphOptions& options = {}) {
  std::ifstream in = detail::open_for_read(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (detail::skippable(view)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    auto fields = detail::split_tabs(view);
    if (fields.size() != 3) {
      throw IngestError("expected 'src<TAB>dst<TAB>relation', got " + std::to_string(fields.size()) + " fields " +
                        where);
    }
    const std::size_t src = detail::parse_node_id(fields[0], n, where);
    const std::size_t dst = detail::parse_node_id(fields[1], n, where);
    edges.push_back(Edge{src, dst, std::string(fields[2]), line_no});
  }
  try {
    return build_graph(edges, n, relations, options);
  } catch (const IngestError& e) {
    throw IngestError(std::string(e.what()) + " in " + path);
  }
}

/// Writes every forward edge as "src<TAB>dst<TAB>relation", once per unit of weight.
inline void write_edges(const std::string& path, const HeteroGraph& g) {
  std::ofstream out = detail::open_for_write(path);
  for (const auto& r : g.relations) {
    if (r.kind.direction != Direction::kForward) continue;
    for (std::size_t i = 0; i < r.adjacency.rows(); ++i) {
      auto cols = r.adjacency.row_cols(i);
      auto vals = r.adjacency.row_values(i);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto copies = std::max<long long>(1, std::llround(vals[k]));
        for (long long c = 0; c < copies; ++c) out << i << '\t' << cols[k] << '\t' << r.kind.name << '\n';
      }
    }
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Reads "node_id<TAB>class_name" lines; users not listed stay kUnlabeled.
inline std::vector<int> load_labels(const std::string& path, std::size_t n, std::span<const std::string> classes) {
  std::ifstream in = detail::open_for_read(path);
  std::unordered_map<std::string, int> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], static_cast<int>(c));
  std::vector<int> labels(n, kUnlabeled);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (detail::skippable(view)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    auto fields = detail::split_tabs(view);
    if (fields.size() != 2) throw IngestError("expected 'node_id<TAB>class_name' " + where);
    const std::size_t id = detail::parse_node_id(fields[0], n, where);
    auto it = index.find(std::string(fields[1]));
    if (it == index.end()) throw IngestError("unknown class '" + std::string(fields[1]) + "' " + where);
    if (labels[id] != kUnlabeled && labels[id] != it->second) {
      throw IngestError("node " + std::to_string(id) + " has conflicting labels " + where);
    }
    labels[id] = it->second;
  }
  return labels;
}

inline void write_labels(const std::string& path, std::span<const int> labels, std::span<const std::string> classes) {
  std::ofstream out = detail::open_for_write(path);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kUnlabeled) out << i << '\t' << classes[static_cast<std::size_t>(labels[i])] << '\n';
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Reads "node_id<TAB>text" lines; several lines for one user are concatenated in file order.
inline std::vector<Tokens> load_texts(const std::string& path, std::size_t n) {
  std::ifstream in = detail::open_for_read(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  if (auto bad = detail::find_invalid_utf8(content)) {
    throw IngestError("invalid UTF-8 in " + path + " at byte offset " + std::to_string(*bad));
  }
  std::vector<Tokens> tokens(n);
  std::string_view rest(content);
  std::size_t line_no = 0;
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = detail::strip_cr(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    ++line_no;
    if (detail::skippable(line)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw IngestError("expected 'node_id<TAB>text' " + where);
    const std::size_t id = detail::parse_node_id(line.substr(0, tab), n, where);
    Tokens toks = tokenize(line.substr(tab + 1));
    tokens[id].insert(tokens[id].end(), std::make_move_iterator(toks.begin()), std::make_move_iterator(toks.end()));
  }
  return tokens;
}

inline void write_texts(const std::string& path, std::span<const Tokens> tokens) {
  std::ofstream out = detail::open_for_write(path);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty()) continue;
    out << i << '\t';
    for (std::size_t k = 0; k < tokens[i].size(); ++k) out << (k ? " " : "") << tokens[i][k];
    out << '\n';
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Optional "node_id<TAB>name" file.
inline std::vector<std::string> load_node_names(const std::string& path, std::size_t n) {
  std::ifstream in = detail::open_for_read(path);
  std::vector<std::string> names(n);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (detail::skippable(view)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    auto fields = detail::split_tabs(view);
    if (fields.size() != 2) throw IngestError("expected 'node_id<TAB>name' " + where);
    names[detail::parse_node_id(fields[0], n, where)] = std::string(fields[1]);
  }
  return names;
}

/// "node_id<TAB>tag" lines; a user may carry several tags.
inline std::vector<std::pair<std::size_t, std::string>> load_tags(const std::string& path, std::size_t n) {
  std::ifstream in = detail::open_for_read(path);
  std::vector<std::pair<std::size_t, std::string>> tags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (detail::skippable(view)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    auto fields = detail::split_tabs(view);
    if (fields.size() != 2) throw IngestError("expected 'node_id<TAB>tag' " + where);
    tags.emplace_back(detail::parse_node_id(fields[0], n, where), std::string(fields[1]));
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Synthetic multimodal social network

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t relations = 2;
  std::size_t classes = 2;
  double rho_graph = 0.9;  // probability an edge stays inside the source's community
  double rho_text = 0.9;   // text informativeness on the same scale; 1/classes means pure noise
  double conflict_fraction = 0.0;
  double label_fraction = 1.0;
  std::uint64_t seed = 0;
  double mean_out_degree = 5.0;
  std::size_t tokens_per_user = 30;
  std::size_t signature_vocab = 50;
  std::size_t noise_vocab = 50;
  std::size_t text_dim = 300;

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
    };
    prob(rho_graph, "rho_graph");
    prob(rho_text, "rho_text");
    prob(conflict_fraction, "conflict_fraction");
    prob(label_fraction, "label_fraction");
    if (n < 20) throw ConfigError("synthetic graphs need n >= 20");
    if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
    if (classes > n) throw ConfigError("more classes than nodes");
    if (relations == 0) throw ConfigError("synthetic data needs at least one relation");
    if (!(mean_out_degree >= 0.0)) throw ConfigError("mean out-degree must be non-negative");
    if (signature_vocab == 0 || noise_vocab == 0 || text_dim == 0) throw ConfigError("vocabulary sizes must be positive");
  }

  /// Probability that a token comes from the text label's signature vocabulary:
  /// rho_text rescaled so that 1/classes maps to 0 and 1 maps to 1.
  double signature_probability() const {
    const double chance = 1.0 / static_cast<double>(classes);
    return std::clamp((rho_text - chance) / (1.0 - chance), 0.0, 1.0);
  }
};

struct SynthTruth {
  std::vector<int> labels;  // every user
  std::vector<bool> graph_informative;  // drew more same-community edges than the per-class share of others
  std::vector<bool> text_informative;   // at least one signature token of its own class
  std::vector<bool> conflict;           // text generated from another class's vocabulary
};

inline std::vector<std::string> default_relation_names(std::size_t m) {
  static const char* known[] = {"follow", "retweet", "reply", "mention", "like"};
  std::vector<std::string> names;
  for (std::size_t r = 0; r < m; ++r) names.push_back(r < 5 ? known[r] : "relation" + std::to_string(r));
  return names;
}

inline std::string signature_word(std::size_t cls, std::size_t j) {
  return "sig" + std::to_string(cls) + "_" + std::to_string(j);
}
inline std::string noise_word(std::size_t j) { return "noise_" + std::to_string(j); }

struct SynthDataset {
  DatasetBundle bundle;
  SynthTruth truth;
  WordVectors vectors;
};

inline SynthDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.n;
  const std::size_t C = cfg.classes;

  SynthDataset out;
  SynthTruth& truth = out.truth;
  truth.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) truth.labels[i] = static_cast<int>(i % C);
  std::shuffle(truth.labels.begin(), truth.labels.end(), rng);

  std::vector<std::vector<std::size_t>> members(C), outsiders(C);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) (static_cast<std::size_t>(truth.labels[i]) == c ? members : outsiders)[c].push_back(i);

  // Graph: planted partition per relation.
  const std::vector<std::string> relation_names = default_relation_names(cfg.relations);
  std::vector<Edge> edges;
  std::vector<std::size_t> intra(n, 0), inter(n, 0);
  std::poisson_distribution<int> degree(cfg.mean_out_degree);
  std::bernoulli_distribution stay_inside(cfg.rho_graph);
  for (std::size_t r = 0; r < cfg.relations; ++r) {
    for (std::size_t u = 0; u < n; ++u) {
      const auto& own = members[static_cast<std::size_t>(truth.labels[u])];
      const auto& others = outsiders[static_cast<std::size_t>(truth.labels[u])];
      const int k = degree(rng);
      for (int e = 0; e < k; ++e) {
        if (stay_inside(rng)) {
          if (own.size() < 2) continue;
          std::uniform_int_distribution<std::size_t> pick(0, own.size() - 2);
          std::size_t v = own[pick(rng)];
          if (v == u) v = own.back();  // skip self by remapping onto the last member
          edges.push_back(Edge{u, v, relation_names[r], 0});
          ++intra[u];
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
          edges.push_back(Edge{u, others[pick(rng)], relation_names[r], 0});
          ++inter[u];
        }
      }
    }
  }
  truth.graph_informative.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    truth.graph_informative[u] = static_cast<double>(intra[u]) > static_cast<double>(inter[u]) / static_cast<double>(C - 1);
  }

  // Conflict users write with another class's vocabulary.
  truth.conflict.assign(n, false);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto count = static_cast<std::size_t>(std::llround(cfg.conflict_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < count; ++k) truth.conflict[order[k]] = true;
  }

  // Text.
  const double p_signature = cfg.signature_probability();
  std::bernoulli_distribution from_signature(p_signature);
  std::uniform_int_distribution<std::size_t> pick_sig(0, cfg.signature_vocab - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, cfg.noise_vocab - 1);
  std::uniform_int_distribution<std::size_t> pick_other(1, C - 1);
  out.bundle.tokens.resize(n);
  truth.text_informative.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t text_class = static_cast<std::size_t>(truth.labels[u]);
    if (truth.conflict[u]) text_class = (text_class + pick_other(rng)) % C;
    std::size_t signature_tokens = 0;
    Tokens& toks = out.bundle.tokens[u];
    for (std::size_t t = 0; t < cfg.tokens_per_user; ++t) {
      if (from_signature(rng)) {
        toks.push_back(signature_word(text_class, pick_sig(rng)));
        ++signature_tokens;
      } else {
        toks.push_back(noise_word(pick_noise(rng)));
      }
    }
    truth.text_informative[u] = !truth.conflict[u] && signature_tokens > 0;
  }

  // Word vectors: independent standard-normal rows.
  WordVectors& wv = out.vectors;
  wv.dim = cfg.text_dim;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < cfg.signature_vocab; ++j) wv.words.push_back(signature_word(c, j));
  for (std::size_t j = 0; j < cfg.noise_vocab; ++j) wv.words.push_back(noise_word(j));
  wv.table = DenseMatrix(wv.words.size(), wv.dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : wv.table.data()) v = normal(rng);
  for (std::size_t w = 0; w < wv.words.size(); ++w) wv.index.emplace(wv.words[w], w);

  // Labels visible to training.
  DatasetBundle& b = out.bundle;
  b.labels.assign(n, kUnlabeled);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto count = static_cast<std::size_t>(std::llround(cfg.label_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < count; ++k) b.labels[order[k]] = truth.labels[order[k]];
  }

  b.graph = build_graph(edges, n, relation_names);
  b.meta.task = "synthetic";
  for (std::size_t c = 0; c < C; ++c) b.meta.class_names.push_back("class" + std::to_string(c));
  b.meta.relation_names = relation_names;
  return out;
}

struct OracleAccuracy {
  double graph = 0.0;
  double text = 0.0;
};

/// Accuracy of the generative-model-optimal classifier per modality, scored
/// against the true labels of every user. Ties are broken uniformly at random.
inline OracleAccuracy bayes_oracle_accuracy(const SynthConfig& cfg, const DatasetBundle& bundle,
                                            const SynthTruth& truth) {
  const std::size_t n = bundle.graph.n;
  const std::size_t C = cfg.classes;
  Rng rng(cfg.seed ^ 0x5eedULL);
  auto argmax_random_ties = [&rng](const std::vector<double>& scores) {
    const double best = *std::max_element(scores.begin(), scores.end());
    std::vector<std::size_t> winners;
    for (std::size_t c = 0; c < scores.size(); ++c)
      if (scores[c] >= best - 1e-9 * std::max(1.0, std::abs(best))) winners.push_back(c);
    std::uniform_int_distribution<std::size_t> pick(0, winners.size() - 1);
    return winners[pick(rng)];
  };

  // Graph: each edge touching u lands in u's community with probability rho_graph.
  const double rho = std::clamp(cfg.rho_graph, 1e-12, 1.0 - 1e-12);
  const double log_same = std::log(rho);
  const double log_other = std::log((1.0 - rho) / static_cast<double>(C - 1));
  std::vector<std::vector<double>> class_counts(n, std::vector<double>(C, 0.0));
  for (const auto& r : bundle.graph.relations) {
    if (r.kind.direction != Direction::kForward) continue;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v : r.adjacency.row_cols(u)) {
        class_counts[u][static_cast<std::size_t>(truth.labels[v])] += 1;
        class_counts[v][static_cast<std::size_t>(truth.labels[u])] += 1;
      }
    }
  }
  std::size_t graph_correct = 0;
  std::vector<double> scores(C);
  for (std::size_t u = 0; u < n; ++u) {
    double total = 0.0;
    for (double k : class_counts[u]) total += k;
    for (std::size_t c = 0; c < C; ++c) scores[c] = class_counts[u][c] * log_same + (total - class_counts[u][c]) * log_other;
    if (argmax_random_ties(scores) == static_cast<std::size_t>(truth.labels[u])) ++graph_correct;
  }

  // Text: naive Bayes over the signature/noise mixture.
  const double s = cfg.signature_probability();
  std::unordered_map<std::string, int> signature_class;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < cfg.signature_vocab; ++j) signature_class.emplace(signature_word(c, j), static_cast<int>(c));
  const double floor = 1e-300;
  const double p_sig = s / static_cast<double>(cfg.signature_vocab);
  const double p_noise = (1.0 - s) / static_cast<double>(cfg.noise_vocab);
  std::size_t text_correct = 0;
  for (std::size_t u = 0; u < n; ++u) {
    std::fill(scores.begin(), scores.end(), 0.0);
    for (const auto& tok : bundle.tokens[u]) {
      auto it = signature_class.find(tok);
      for (std::size_t c = 0; c < C; ++c) {
        const double p = it == signature_class.end() ? p_noise : (it->second == static_cast<int>(c) ? p_sig : 0.0);
        scores[c] += std::log(std::max(p, floor));
      }
    }
    if (argmax_random_ties(scores) == static_cast<std::size_t>(truth.labels[u])) ++text_correct;
  }
  return OracleAccuracy{static_cast<double>(graph_correct) / static_cast<double>(n),
                        static_cast<double>(text_correct) / static_cast<double>(n)};
}

inline void write_truth(const std::string& path, const SynthTruth& truth, std::span<const std::string> classes) {
  std::ofstream out = detail::open_for_write(path);
  out << "# node_id\ttrue_class\tgraph_informative\ttext_informative\tconflict\n";
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    out << i << '\t' << classes[static_cast<std::size_t>(truth.labels[i])] << '\t' << int{truth.graph_informative[i]}
        << '\t' << int{truth.text_informative[i]} << '\t' << int{truth.conflict[i]} << '\n';
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline SynthTruth load_truth(const std::string& path, std::size_t n, std::span<const std::string> classes) {
  std::ifstream in = detail::open_for_read(path);
  std::unordered_map<std::string, int> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], static_cast<int>(c));
  SynthTruth t;
  t.labels.assign(n, kUnlabeled);
  t.graph_informative.assign(n, false);
  t.text_informative.assign(n, false);
  t.conflict.assign(n, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::strip_cr(line);
    if (detail::skippable(view)) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    auto f = detail::split_tabs(view);
    if (f.size() != 5) throw IngestError("expected 5 truth columns " + where);
    const std::size_t id = detail::parse_node_id(f[0], n, where);
    auto it = index.find(std::string(f[1]));
    if (it == index.end()) throw IngestError("unknown class '" + std::string(f[1]) + "' " + where);
    t.labels[id] = it->second;
    t.graph_informative[id] = f[2] == "1";
    t.text_informative[id] = f[3] == "1";
    t.conflict[id] = f[4] == "1";
  }
  return t;
}

// ---------------------------------------------------------------------------
// Subsampling

/// Keeps a uniform sample of labeled and unlabeled users and the induced subgraph.
/// Returns the kept original ids in new-id order alongside the bundle.
inline std::pair<DatasetBundle, std::vector<std::size_t>> subsample_uniform(const DatasetBundle& in,
                                                                          std::size_t labeled_count,
                                                                          std::size_t unlabeled_count,
                                                                          std::uint64_t seed) {
  std::vector<std::size_t> labeled, unlabeled;
  for (std::size_t i = 0; i < in.graph.n; ++i) (in.labels[i] == kUnlabeled ? unlabeled : labeled).push_back(i);
  if (labeled_count > labeled.size() || unlabeled_count > unlabeled.size()) {
    throw ConfigError("subsample asks for " + std::to_string(labeled_count) + " labeled / " +
                      std::to_string(unlabeled_count) + " unlabeled users but only " + std::to_string(labeled.size()) +
                      " / " + std::to_string(unlabeled.size()) + " exist");
  }
  Rng rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  std::shuffle(unlabeled.begin(), unlabeled.end(), rng);
  std::vector<std::size_t> kept(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(labeled_count));
  kept.insert(kept.end(), unlabeled.begin(), unlabeled.begin() + static_cast<std::ptrdiff_t>(unlabeled_count));
  std::sort(kept.begin(), kept.end());
  std::vector<std::size_t> new_id(in.graph.n, in.graph.n);
  for (std::size_t k = 0; k < kept.size(); ++k) new_id[kept[k]] = k;

  std::vector<Edge> edges;
  for (const auto& r : in.graph.relations) {
    if (r.kind.direction != Direction::kForward) continue;
    for (std::size_t u : kept)
      for (std::size_t v : r.adjacency.row_cols(u))
        if (new_id[v] < in.graph.n) edges.push_back(Edge{new_id[u], new_id[v], r.kind.name, 0});
  }
  DatasetBundle out;
  out.meta = in.meta;
  out.graph = build_graph(edges, kept.size(), in.meta.relation_names);
  for (std::size_t old : kept) {
    out.labels.push_back(in.labels[old]);
    if (!in.tokens.empty()) out.tokens.push_back(in.tokens[old]);
    if (!in.graph.node_names.empty()) out.graph.node_names.push_back(in.graph.node_names[old]);
  }
  if (in.features) {
    DenseMatrix f(kept.size(), in.features->cols());
    for (std::size_t k = 0; k < kept.size(); ++k)
      std::copy(in.features->row(kept[k]).begin(), in.features->row(kept[k]).end(), f.row(k).begin());
    out.features = std::move(f);
  }
  return {std::move(out), std::move(kept)};
}

// ---------------------------------------------------------------------------
// Checksums

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, h >>= 4) out[static_cast<std::size_t>(k)] = digits[h & 0xF];
  return out;
}

inline std::string file_checksum(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a_hex(content);
}

}  // namespace camue
