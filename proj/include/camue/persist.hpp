#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "camue/data_io.hpp"
#include "camue/training.hpp"

namespace camue {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCheckpointFormat = "camue-checkpoint/1";

inline Json read_json_file(const std::string& path) {
  std::ifstream in = detail::open_for_read(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IngestError("cannot parse JSON in '" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out = detail::open_for_write(path);
  out << content;
  if (!out) throw IoError("write failure on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Dataset directories
//
// dataset.json declares n, class and relation names, and which files hold the
// edges, labels, texts, word vectors, precomputed embeddings, node names and
// (synthetic only) ground truth. Paths are relative to the directory.

struct DatasetFiles {
  std::string edges = "edges.tsv";
  std::string labels = "labels.tsv";
  std::optional<std::string> texts;
  std::optional<std::string> vectors;
  std::optional<std::string> embeddings;
  std::optional<std::string> nodes;
  std::optional<std::string> truth;
};

struct DatasetDir {
  fs::path root;
  DatasetFiles files;
  DatasetBundle bundle;
  std::optional<SynthConfig> synth;

  std::string path_of(const std::string& rel) const { return (root / rel).string(); }
};

inline Json to_json(const SynthConfig& c) {
  return Json{{"n", c.n},
              {"relations", c.relations},
              {"classes", c.classes},
              {"rho_graph", c.rho_graph},
              {"rho_text", c.rho_text},
              {"conflict_fraction", c.conflict_fraction},
              {"label_fraction", c.label_fraction},
              {"seed", c.seed},
              {"mean_out_degree", c.mean_out_degree},
              {"tokens_per_user", c.tokens_per_user},
              {"signature_vocab", c.signature_vocab},
              {"noise_vocab", c.noise_vocab},
              {"text_dim", c.text_dim}};
}

inline SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig c;
  c.n = j.at("n");
  c.relations = j.at("relations");
  c.classes = j.at("classes");
  c.rho_graph = j.at("rho_graph");
  c.rho_text = j.at("rho_text");
  c.conflict_fraction = j.at("conflict_fraction");
  c.label_fraction = j.at("label_fraction");
  c.seed = j.at("seed");
  c.mean_out_degree = j.at("mean_out_degree");
  c.tokens_per_user = j.at("tokens_per_user");
  c.signature_vocab = j.at("signature_vocab");
  c.noise_vocab = j.at("noise_vocab");
  c.text_dim = j.at("text_dim");
  return c;
}

/// Resolves a dataset path; relative paths that do not exist are retried under $CAMUE_DATA_ROOT.
inline fs::path resolve_data_path(const std::string& path) {
  fs::path p(path);
  if (p.is_relative() && !fs::exists(p)) {
    if (const char* root = std::getenv("CAMUE_DATA_ROOT"); root != nullptr && *root != '\0') {
      fs::path candidate = fs::path(root) / p;
      if (fs::exists(candidate)) return candidate;
    }
  }
  return p;
}

inline DatasetDir load_dataset_dir(const std::string& path) {
  DatasetDir d;
  d.root = resolve_data_path(path);
  const fs::path meta_path = d.root / "dataset.json";
  if (!fs::exists(meta_path)) throw IoError("no dataset.json in '" + d.root.string() + "'");
  const Json meta = read_json_file(meta_path.string());
  std::size_t n = 0;
  try {
    n = meta.at("n").get<std::size_t>();
    d.bundle.meta.task = meta.value("task", std::string("unnamed"));
    d.bundle.meta.class_names = meta.at("classes").get<std::vector<std::string>>();
    d.bundle.meta.relation_names = meta.at("relations").get<std::vector<std::string>>();
    const Json files = meta.value("files", Json::object());
    d.files.edges = files.value("edges", d.files.edges);
    d.files.labels = files.value("labels", d.files.labels);
    auto opt = [&files](const char* key) -> std::optional<std::string> {
      if (files.contains(key) && !files.at(key).is_null()) return files.at(key).get<std::string>();
      return std::nullopt;
    };
    d.files.texts = opt("texts");
    d.files.vectors = opt("vectors");
    d.files.embeddings = opt("embeddings");
    d.files.nodes = opt("nodes");
    d.files.truth = opt("truth");
    if (meta.contains("synth")) d.synth = synth_config_from_json(meta.at("synth"));
  } catch (const Json::exception& e) {
    throw IngestError("malformed dataset.json in '" + d.root.string() + "': " + e.what());
  }
  d.bundle.graph = load_edges(d.path_of(d.files.edges), n, d.bundle.meta.relation_names);
  d.bundle.labels = load_labels(d.path_of(d.files.labels), n, d.bundle.meta.class_names);
  if (d.files.texts) d.bundle.tokens = load_texts(d.path_of(*d.files.texts), n);
  if (d.files.nodes) d.bundle.graph.node_names = load_node_names(d.path_of(*d.files.nodes), n);
  d.bundle.validate();
  return d;
}

/// Writes a synthetic dataset (bundle, truth and word vectors) in the directory format.
inline void write_synthetic_dir(const fs::path& dir, const SynthDataset& data, const SynthConfig& cfg) {
  fs::create_directories(dir);
  const auto& b = data.bundle;
  write_edges((dir / "edges.tsv").string(), b.graph);
  write_labels((dir / "labels.tsv").string(), b.labels, b.meta.class_names);
  write_texts((dir / "texts.tsv").string(), b.tokens);
  write_truth((dir / "truth.tsv").string(), data.truth, b.meta.class_names);
  write_word_vectors((dir / "vectors.txt").string(), data.vectors);
  Json meta{{"task", b.meta.task},
            {"n", b.graph.n},
            {"classes", b.meta.class_names},
            {"relations", b.meta.relation_names},
            {"files",
             {{"edges", "edges.tsv"},
              {"labels", "labels.tsv"},
              {"texts", "texts.tsv"},
              {"vectors", "vectors.txt"},
              {"truth", "truth.tsv"}}},
            {"synth", to_json(cfg)}};
  write_text_file((dir / "dataset.json").string(), meta.dump(2) + "\n");
}

struct TextSource {
  TextEncoderKind kind = TextEncoderKind::kPooled;
  std::optional<std::string> vectors_path;     // overrides dataset.json
  std::optional<std::string> embeddings_path;  // overrides dataset.json
};

/// Text features for training: pooled word vectors or a precomputed matrix.
inline DenseMatrix text_features_for(const DatasetDir& d, const TextSource& src) {
  const std::size_t n = d.bundle.graph.n;
  if (src.kind == TextEncoderKind::kPooled) {
    std::string vectors;
    if (src.vectors_path) {
      vectors = *src.vectors_path;
    } else if (d.files.vectors) {
      vectors = d.path_of(*d.files.vectors);
    } else {
      throw ConfigError("pooled text encoder needs a word-vector file (dataset.json files.vectors or --vectors)");
    }
    if (d.bundle.tokens.empty()) throw ConfigError("pooled text encoder needs a texts file");
    return pool_word_vectors(d.bundle.tokens, load_word_vectors(vectors));
  }
  std::string path;
  if (src.embeddings_path) {
    path = *src.embeddings_path;
  } else if (d.files.embeddings) {
    path = d.path_of(*d.files.embeddings);
  } else {
    throw ConfigError("precomputed text encoder needs an embedding file (dataset.json files.embeddings or --embeddings)");
  }
  return load_precomputed_embeddings(path, n);
}

inline std::map<std::string, std::string> dataset_checksums(const DatasetDir& d) {
  std::map<std::string, std::string> sums;
  auto add = [&](const std::string& rel) { sums[rel] = file_checksum(d.path_of(rel)); };
  add("dataset.json");
  add(d.files.edges);
  add(d.files.labels);
  if (d.files.texts) add(*d.files.texts);
  if (d.files.vectors) add(*d.files.vectors);
  if (d.files.embeddings) add(*d.files.embeddings);
  if (d.files.nodes) add(*d.files.nodes);
  return sums;
}

/// One checksum over the files that define users, edges and labels.
inline std::string dataset_fingerprint(const DatasetDir& d) {
  std::string joined;
  for (const auto& [name, sum] : dataset_checksums(d)) joined += name + "=" + sum + ";";
  return fnv1a_hex(joined);
}

inline TrainingData make_training_data(const DatasetDir& d, DenseMatrix text) {
  TrainingData t;
  t.graph = normalize(d.bundle.graph);
  t.text = std::move(text);
  t.labels = d.bundle.labels;
  t.num_classes = d.bundle.meta.class_names.size();
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  Model model;
  TrainConfig train;
  std::string dataset_fingerprint;
  Metrics validation;
  int epochs_ran = 0;
  int best_epoch = 0;
};

inline Json to_json(const Metrics& m) {
  return Json{{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"binary_f1", m.binary_f1}, {"support", m.support}};
}

inline Metrics metrics_from_json(const Json& j) {
  return Metrics{j.at("accuracy"), j.at("macro_f1"), j.at("binary_f1"), j.at("support")};
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate}, {"hidden", c.hidden},
              {"dropout", c.dropout},             {"epochs", c.epochs},
              {"patience", c.patience},           {"seed", c.seed},
              {"mode", to_string(c.mode)},        {"graph_encoder", to_string(c.graph_encoder)},
              {"text_encoder", to_string(c.text_encoder)}, {"lambda", c.lambda},
              {"gate_hidden1", c.gate.hidden1},   {"gate_hidden2", c.gate.hidden2}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate");
  c.hidden = j.at("hidden");
  c.dropout = j.at("dropout");
  c.epochs = j.at("epochs");
  c.patience = j.at("patience");
  c.seed = j.at("seed");
  c.mode = parse_fusion_mode(j.at("mode").get<std::string>());
  c.graph_encoder = parse_graph_encoder(j.at("graph_encoder").get<std::string>());
  c.text_encoder = parse_text_encoder(j.at("text_encoder").get<std::string>());
  c.lambda = j.at("lambda");
  c.gate.hidden1 = j.at("gate_hidden1");
  c.gate.hidden2 = j.at("gate_hidden2");
  return c;
}

inline Json to_json(const ModelConfig& c) {
  return Json{{"mode", to_string(c.mode)},
              {"graph_encoder", to_string(c.graph_encoder)},
              {"text_encoder", to_string(c.text_encoder)},
              {"num_nodes", c.num_nodes},
              {"num_relations", c.num_relations},
              {"text_dim", c.text_dim},
              {"num_classes", c.num_classes},
              {"hidden", c.hidden},
              {"gate_hidden1", c.gate.hidden1},
              {"gate_hidden2", c.gate.hidden2},
              {"dropout", c.dropout},
              {"lambda", c.lambda}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.mode = parse_fusion_mode(j.at("mode").get<std::string>());
  c.graph_encoder = parse_graph_encoder(j.at("graph_encoder").get<std::string>());
  c.text_encoder = parse_text_encoder(j.at("text_encoder").get<std::string>());
  c.num_nodes = j.at("num_nodes");
  c.num_relations = j.at("num_relations");
  c.text_dim = j.at("text_dim");
  c.num_classes = j.at("num_classes");
  c.hidden = j.at("hidden");
  c.gate.hidden1 = j.at("gate_hidden1");
  c.gate.hidden2 = j.at("gate_hidden2");
  c.dropout = j.at("dropout");
  c.lambda = j.at("lambda");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Json params = Json::object();
  for (const Parameter* p : ck.model.parameters()) {
    params[p->name] = Json{{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", p->value.data()}};
  }
  Json j{{"format", kCheckpointFormat},
         {"version", kVersion},
         {"model", to_json(ck.model.config)},
         {"train", to_json(ck.train)},
         {"dataset_fingerprint", ck.dataset_fingerprint},
         {"validation", to_json(ck.validation)},
         {"epochs_ran", ck.epochs_ran},
         {"best_epoch", ck.best_epoch},
         {"parameters", std::move(params)}};
  write_text_file(path, j.dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const Json j = read_json_file(path);
  try {
    if (j.at("format") != kCheckpointFormat) throw IngestError("'" + path + "' is not a checkpoint");
    Checkpoint ck;
    ck.train = train_config_from_json(j.at("train"));
    Rng rng(0);
    ck.model = make_model(model_config_from_json(j.at("model")), rng);
    const Json& params = j.at("parameters");
    for (Parameter* p : ck.model.parameters()) {
      if (!params.contains(p->name)) throw IngestError("checkpoint '" + path + "' lacks parameter '" + p->name + "'");
      const Json& e = params.at(p->name);
      const std::size_t rows = e.at("rows");
      const std::size_t cols = e.at("cols");
      if (rows != p->value.rows() || cols != p->value.cols()) {
        throw IngestError("checkpoint parameter '" + p->name + "' has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", expected " + p->value.shape_string());
      }
      p->value = DenseMatrix(rows, cols, e.at("data").get<std::vector<double>>());
    }
    ck.dataset_fingerprint = j.at("dataset_fingerprint");
    ck.validation = metrics_from_json(j.at("validation"));
    ck.epochs_ran = j.at("epochs_ran");
    ck.best_epoch = j.at("best_epoch");
    return ck;
  } catch (const Json::exception& e) {
    throw IngestError("malformed checkpoint '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

/// "accuracy ; f1" with three decimals.
inline std::string acc_f1(double accuracy, double f1) { return fixed(accuracy, 3) + " ; " + fixed(f1, 3); }

inline Json to_json(const RunRecord& r) {
  Json j{{"mode", to_string(r.mode)},
         {"graph_encoder", to_string(r.graph_encoder)},
         {"text_encoder", to_string(r.text_encoder)},
         {"seed", r.seed},
         {"lambda", r.lambda},
         {"accuracy", r.test.accuracy},
         {"f1", r.test.macro_f1},
         {"binary_f1", r.test.binary_f1},
         {"validation_accuracy", r.validation.accuracy},
         {"epochs_ran", r.epochs_ran},
         {"best_epoch", r.best_epoch}};
  if (r.gate) {
    j["mean_alpha"] = r.gate->mean_alpha;
    j["mean_beta"] = r.gate->mean_beta;
    j["fraction_alpha_gt_beta"] = r.gate->fraction_alpha_gt_beta;
  }
  return j;
}

inline std::string runs_tsv(std::span<const RunRecord> runs) {
  std::string out =
      "mode\tgraph_encoder\ttext_encoder\tseed\tlambda\taccuracy\tf1\tbinary_f1\tvalidation_accuracy\tepochs_ran\t"
      "best_epoch\tmean_alpha\tfraction_alpha_gt_beta\n";
  for (const auto& r : runs) {
    out += std::string(to_string(r.mode)) + "\t" + std::string(to_string(r.graph_encoder)) + "\t" +
           std::string(to_string(r.text_encoder)) + "\t" + std::to_string(r.seed) + "\t" + fixed(r.lambda, 3) + "\t" +
           fixed(r.test.accuracy) + "\t" + fixed(r.test.macro_f1) + "\t" + fixed(r.test.binary_f1) + "\t" +
           fixed(r.validation.accuracy) + "\t" + std::to_string(r.epochs_ran) + "\t" + std::to_string(r.best_epoch) +
           "\t" + (r.gate ? fixed(r.gate->mean_alpha) : "NA") + "\t" +
           (r.gate ? fixed(r.gate->fraction_alpha_gt_beta) : "NA") + "\n";
  }
  return out;
}

inline std::string runs_jsonl(std::span<const RunRecord> runs) {
  std::string out;
  for (const auto& r : runs) out += to_json(r).dump() + "\n";
  return out;
}

inline std::string summary_tsv(std::span<const AggregateRow> rows) {
  std::string out = "mode\truns\tmean_accuracy\tstd_accuracy\tmax_accuracy\tmean_f1\tstd_f1\tmax_f1\n";
  for (const auto& a : rows) {
    out += std::string(to_string(a.mode)) + "\t" + std::to_string(a.runs) + "\t" + fixed(a.mean_accuracy) + "\t" +
           fixed(a.std_accuracy) + "\t" + fixed(a.max_accuracy) + "\t" + fixed(a.mean_f1) + "\t" + fixed(a.std_f1) +
           "\t" + fixed(a.max_f1) + "\n";
  }
  return out;
}

}  // namespace camue
