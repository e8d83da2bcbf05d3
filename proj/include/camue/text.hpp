#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "camue/error.hpp"
#include "camue/numerics/matrix.hpp"

namespace camue {

using Tokens = std::vector<std::string>;

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != prefix[i]) return false;
  }
  return true;
}

inline double parse_double(std::string_view field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw IngestError("cannot parse number '" + std::string(field) + "' " + where);
  return v;
}

inline std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void append_double(std::string& buf, double v) {
  char tmp[32];
  auto [ptr, ec] = std::to_chars(tmp, tmp + sizeof(tmp), v, std::chars_format::general, 17);
  buf.append(tmp, ptr);
}

}  // namespace detail

/// Lowercases ASCII, splits on whitespace, and drops URLs and @-mentions.
inline Tokens tokenize(std::string_view text) {
  Tokens tokens;
  for (std::string_view raw : detail::split_whitespace(text)) {
    if (raw.front() == '@') continue;
    if (detail::starts_with_ci(raw, "http://") || detail::starts_with_ci(raw, "https://") ||
        detail::starts_with_ci(raw, "www.")) {
      continue;
    }
    std::string tok(raw);
    for (char& c : tok)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

/// Word-vector table in the GloVe text distribution format.
struct WordVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::size_t> index;
  DenseMatrix table;  // one row per word
  std::vector<std::string> words;

  const double* find(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? nullptr : table.row(it->second).data();
  }
};

inline WordVectors load_word_vectors(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  WordVectors wv;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    const std::string where = "at " + path + ":" + std::to_string(line_no);
    const std::size_t d = fields.size() - 1;
    if (wv.dim == 0) {
      if (d == 0) throw IngestError("word vector without components " + where);
      wv.dim = d;
    } else if (d != wv.dim) {
      throw IngestError("word vector has " + std::to_string(d) + " components, expected " + std::to_string(wv.dim) +
                        " " + where);
    }
    std::string word(fields[0]);
    if (wv.index.contains(word)) continue;  // first occurrence wins
    for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(detail::parse_double(fields[k], where));
    wv.index.emplace(word, wv.words.size());
    wv.words.push_back(std::move(word));
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  wv.table = DenseMatrix(wv.words.size(), wv.dim, std::move(values));
  return wv;
}

inline void write_word_vectors(const std::string& path, const WordVectors& wv) {
  std::ofstream out = detail::open_for_write(path);
  std::string buf;
  for (std::size_t w = 0; w < wv.words.size(); ++w) {
    buf = wv.words[w];
    for (double v : wv.table.row(w)) {
      buf.push_back(' ');
      detail::append_double(buf, v);
    }
    buf.push_back('\n');
    out << buf;
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

/// Mean of the in-vocabulary token vectors per user; zero row when none match.
inline DenseMatrix pool_word_vectors(std::span<const Tokens> tokens_per_user, const WordVectors& vectors) {
  DenseMatrix out(tokens_per_user.size(), vectors.dim);
  std::string lowered;
  for (std::size_t u = 0; u < tokens_per_user.size(); ++u) {
    auto row = out.row(u);
    std::size_t matched = 0;
    for (const auto& tok : tokens_per_user[u]) {
      lowered = tok;
      for (char& c : lowered)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      const double* v = vectors.find(lowered);
      if (v == nullptr) continue;
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += v[j];
      ++matched;
    }
    if (matched > 0)
      for (double& x : row) x /= static_cast<double>(matched);
  }
  return out;
}

// Embedding matrix text format: a header line "n D" followed by n lines of D
// numbers printed with 17 significant digits.

inline void write_embedding_matrix(const std::string& path, const DenseMatrix& m) {
  std::ofstream out = detail::open_for_write(path);
  std::string buf = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  out << buf;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    buf.clear();
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) buf.push_back(' ');
      detail::append_double(buf, row[j]);
    }
    buf.push_back('\n');
    out << buf;
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline DenseMatrix read_embedding_matrix(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return "at " + path + ":" + std::to_string(line_no); };
  std::size_t rows = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) throw IngestError("embedding header must be 'n D' " + where());
    rows = static_cast<std::size_t>(detail::parse_double(fields[0], where()));
    cols = static_cast<std::size_t>(detail::parse_double(fields[1], where()));
    break;
  }
  if (line_no == 0) throw IngestError("embedding file '" + path + "' is empty");
  std::vector<double> data;
  data.reserve(rows * cols);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != cols) {
      throw IngestError("embedding row has " + std::to_string(fields.size()) + " values, header declares " +
                        std::to_string(cols) + " " + where());
    }
    if (++seen > rows) {
      throw IngestError("embedding file has more than the " + std::to_string(rows) + " rows its header declares " +
                        where());
    }
    for (auto f : fields) data.push_back(detail::parse_double(f, where()));
  }
  if (seen != rows) {
    throw IngestError("embedding file '" + path + "' has " + std::to_string(seen) + " rows, header declares " +
                      std::to_string(rows));
  }
  return DenseMatrix(rows, cols, std::move(data));
}

/// Precomputed per-user text embeddings (e.g. transformer sentence vectors) in node-id order.
inline DenseMatrix load_precomputed_embeddings(const std::string& path, std::size_t expected_rows) {
  DenseMatrix m = read_embedding_matrix(path);
  if (m.rows() != expected_rows) {
    throw IngestError("embedding file '" + path + "' has " + std::to_string(m.rows()) + " rows, expected " +
                      std::to_string(expected_rows) + " (one per user)");
  }
  return m;
}

}  // namespace camue
