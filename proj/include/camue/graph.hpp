#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "camue/error.hpp"
#include "camue/numerics/matrix.hpp"

namespace camue {

enum class Direction { kForward, kReverse };

struct RelationKind {
  std::size_t id = 0;
  std::string name;
  Direction direction = Direction::kForward;
  std::size_t counterpart = 0;  // id of the paired forward/reverse relation
};

struct Relation {
  RelationKind kind;
  SparseMatrix adjacency;  // n×n, row = source
};

/// Users plus one adjacency per relation. Forward relation k has id 2k and its
/// transpose ("<name>_rev") has id 2k+1.
struct HeteroGraph {
  std::size_t n = 0;
  std::vector<Relation> relations;
  std::vector<std::string> node_names;  // empty when unnamed

  std::size_t num_relations() const noexcept { return relations.size(); }

  std::vector<std::string> forward_relation_names() const {
    std::vector<std::string> names;
    for (const auto& r : relations)
      if (r.kind.direction == Direction::kForward) names.push_back(r.kind.name);
    return names;
  }
};

struct NormalizedGraph {
  std::size_t n = 0;
  std::vector<SparseMatrix> relations;  // self-loops added, rows sum to 1
  SparseMatrix summed_adjacency;        // binarized sum of the forward relations, no self-loops
};

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::string relation;
  std::size_t line = 0;  // 1-based source line, 0 when not from a file
};

struct GraphOptions {
  // Keep repeated (src, dst, relation) lines as edge weights instead of collapsing to 1.
  bool count_multiplicity = false;
};

inline HeteroGraph build_graph(std::span<const Edge> edges, std::size_t n, std::span<const std::string> relation_names,
                               const GraphOptions& options = {}) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < relation_names.size(); ++k) {
    if (!index.emplace(relation_names[k], k).second) {
      throw ConfigError("relation '" + relation_names[k] + "' declared twice");
    }
  }
  std::vector<std::vector<Triplet>> per_relation(relation_names.size());
  for (const Edge& e : edges) {
    const std::string where = e.line > 0 ? " at line " + std::to_string(e.line) : std::string();
    if (e.src >= n || e.dst >= n) {
      throw IngestError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) + ")" + where +
                        " references a node id >= n=" + std::to_string(n));
    }
    auto it = index.find(e.relation);
    if (it == index.end()) {
      std::string declared;
      for (const auto& name : relation_names) declared += (declared.empty() ? "" : ", ") + name;
      throw IngestError("unknown relation '" + e.relation + "'" + where + "; declared relations: " + declared);
    }
    per_relation[it->second].push_back({e.src, e.dst, 1.0});
  }
  const Duplicates policy = options.count_multiplicity ? Duplicates::kSum : Duplicates::kKeepOne;

  HeteroGraph g;
  g.n = n;
  for (std::size_t k = 0; k < relation_names.size(); ++k) {
    SparseMatrix forward = SparseMatrix::from_triplets(n, n, std::move(per_relation[k]), policy);
    SparseMatrix reverse = forward.transpose();
    g.relations.push_back({RelationKind{2 * k, relation_names[k], Direction::kForward, 2 * k + 1}, std::move(forward)});
    g.relations.push_back(
        {RelationKind{2 * k + 1, relation_names[k] + "_rev", Direction::kReverse, 2 * k}, std::move(reverse)});
  }
  return g;
}

/// Binarized Σ of the forward adjacencies.
inline SparseMatrix summed_forward_adjacency(const HeteroGraph& g) {
  std::vector<Triplet> entries;
  for (const auto& r : g.relations) {
    if (r.kind.direction != Direction::kForward) continue;
    const auto& a = r.adjacency;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t c : a.row_cols(i)) entries.push_back({i, c, 1.0});
  }
  return SparseMatrix::from_triplets(g.n, g.n, std::move(entries), Duplicates::kKeepOne);
}

/// Adds a unit self-loop to every node, then divides each row by its sum.
inline SparseMatrix row_normalize_with_self_loops(const SparseMatrix& a) {
  std::vector<Triplet> entries;
  entries.reserve(a.nnz() + a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto cols = a.row_cols(i);
    auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) entries.push_back({i, cols[k], vals[k]});
    entries.push_back({i, i, 1.0});
  }
  SparseMatrix with_loops = SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(entries), Duplicates::kSum);
  std::vector<std::size_t> row_ptr(with_loops.row_ptr().begin(), with_loops.row_ptr().end());
  std::vector<std::size_t> col_idx(with_loops.col_idx().begin(), with_loops.col_idx().end());
  std::vector<double> values(with_loops.values().begin(), with_loops.values().end());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double degree = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) degree += values[k];
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) values[k] /= degree;
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(row_ptr), std::move(col_idx), std::move(values));
}

inline NormalizedGraph normalize(const HeteroGraph& g) {
  NormalizedGraph out;
  out.n = g.n;
  out.relations.reserve(g.relations.size());
  for (const auto& r : g.relations) out.relations.push_back(row_normalize_with_self_loops(r.adjacency));
  out.summed_adjacency = summed_forward_adjacency(g);
  return out;
}

inline void validate_permutation(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) {
    throw ConfigError("permutation has " + std::to_string(perm.size()) + " entries for " + std::to_string(n) +
                      " nodes");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw ConfigError("permutation is not a bijection on [0, " + std::to_string(n) + ")");
    seen[p] = true;
  }
}

/// Relabels node i as perm[i] in every adjacency: A'[perm[i], perm[j]] = A[i, j].
inline SparseMatrix permute_sparse(const SparseMatrix& a, std::span<const std::size_t> perm) {
  std::vector<Triplet> entries;
  entries.reserve(a.nnz());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto cols = a.row_cols(i);
    auto vals = a.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) entries.push_back({perm[i], perm[cols[k]], vals[k]});
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(entries));
}

inline HeteroGraph permute_nodes(const HeteroGraph& g, std::span<const std::size_t> perm) {
  validate_permutation(perm, g.n);
  HeteroGraph out;
  out.n = g.n;
  for (const auto& r : g.relations) out.relations.push_back({r.kind, permute_sparse(r.adjacency, perm)});
  if (!g.node_names.empty()) {
    out.node_names.resize(g.n);
    for (std::size_t i = 0; i < g.n; ++i) out.node_names[perm[i]] = g.node_names[i];
  }
  return out;
}

/// Rows of m moved so that row i lands at perm[i].
inline DenseMatrix permute_rows(const DenseMatrix& m, std::span<const std::size_t> perm) {
  validate_permutation(perm, m.rows());
  DenseMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) std::copy(m.row(i).begin(), m.row(i).end(), out.row(perm[i]).begin());
  return out;
}

inline std::vector<std::size_t> out_degrees(const SparseMatrix& a) {
  std::vector<std::size_t> deg(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) deg[i] = a.row_cols(i).size();
  return deg;
}

}  // namespace camue
