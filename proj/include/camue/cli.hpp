#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "camue/persist.hpp"

namespace camue::cli {

namespace detail {

inline void ensure_empty_or_forced(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory '" + dir.string() + "' is not empty (pass --force to overwrite)");
  }
  fs::create_directories(dir);
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline void write_manifest(const fs::path& path, const std::string& command, const Json& config, std::uint64_t seed,
                           const std::map<std::string, std::string>& checksums, double seconds) {
  Json j{{"command", command},
         {"config", config},
         {"seed", seed},
         {"dataset_checksums", checksums},
         {"code_version", kVersion},
         {"wall_clock_seconds", seconds}};
  write_text_file(path.string(), j.dump(2) + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SynthConfig config;
  std::string out;
  bool force = false;
};

inline int cmd_synth(const SynthOptions& opt, std::ostream& log) {
  opt.config.validate();
  const fs::path dir(opt.out);
  detail::ensure_empty_or_forced(dir, opt.force);
  const SynthDataset data = generate_synthetic(opt.config);
  write_synthetic_dir(dir, data, opt.config);
  const OracleAccuracy oracle = bayes_oracle_accuracy(opt.config, data.bundle, data.truth);
  log << "wrote " << opt.config.n << " users, " << opt.config.relations << " relations to " << dir.string() << "\n"
      << "bayes oracle accuracy: graph " << fixed(oracle.graph, 4) << ", text " << fixed(oracle.text, 4) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data;
  std::string mode = "camue";
  std::optional<std::string> text_encoder;   // pooled | precomputed
  std::optional<std::string> graph_encoder;  // rgcn | mlp
  std::optional<std::string> vectors;
  std::optional<std::string> embeddings;
  std::string lambda = "0.1";  // a number or "auto"
  std::uint64_t seed = 0;
  int epochs = 300;
  int patience = 50;
  double learning_rate = 0.01;
  std::size_t hidden = 100;
  double dropout = 0.1;
  std::string out;
  bool force = false;
};

inline const std::vector<double>& lambda_grid() {
  static const std::vector<double> grid{0.0, 0.05, 0.1, 0.2};
  return grid;
}

struct ResolvedTrain {
  TrainConfig config;
  bool lambda_auto = false;
  TextSource text;
};

inline ResolvedTrain resolve_train_options(const TrainOptions& opt) {
  ResolvedTrain r;
  TrainConfig& c = r.config;
  c.mode = parse_fusion_mode(opt.mode);
  if (c.mode == FusionMode::kTextOnly && opt.graph_encoder) {
    throw UsageError("--graph-encoder does not apply to --mode text");
  }
  if (c.mode == FusionMode::kLinkOnly && opt.text_encoder) {
    throw UsageError("--text-encoder does not apply to --mode link");
  }
  c.graph_encoder = parse_graph_encoder(opt.graph_encoder.value_or("rgcn"));
  c.text_encoder = parse_text_encoder(opt.text_encoder.value_or("pooled"));
  if (c.mode == FusionMode::kSimpleFusion && c.graph_encoder != GraphEncoderKind::kRgcn) {
    throw UsageError("--mode simple requires --graph-encoder rgcn");
  }
  if (opt.lambda == "auto") {
    r.lambda_auto = true;
    c.lambda = 0.1;
  } else {
    std::size_t used = 0;
    try {
      c.lambda = std::stod(opt.lambda, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != opt.lambda.size()) throw ConfigError("--lambda must be a number or 'auto', got '" + opt.lambda + "'");
  }
  c.seed = opt.seed;
  c.epochs = opt.epochs;
  c.patience = opt.patience;
  c.learning_rate = opt.learning_rate;
  c.hidden = opt.hidden;
  c.dropout = opt.dropout;
  c.validate();
  r.text = TextSource{c.text_encoder, opt.vectors, opt.embeddings};
  return r;
}

inline TrainingData load_training_data(const DatasetDir& d, const TrainConfig& c, const TextSource& text) {
  DenseMatrix features = uses_text_branch(c.mode) ? text_features_for(d, text) : DenseMatrix();
  return make_training_data(d, std::move(features));
}

inline int cmd_train(const TrainOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  const ResolvedTrain resolved = resolve_train_options(opt);
  const DatasetDir d = load_dataset_dir(opt.data);
  const TrainingData data = load_training_data(d, resolved.config, resolved.text);
  const fs::path out(opt.out);
  detail::ensure_empty_or_forced(out, opt.force);

  const LabeledSplit split = make_split(data.labels, SplitRatios{}, resolved.config.seed);
  std::optional<TrainResult> best;
  TrainConfig chosen = resolved.config;
  const bool sweep = resolved.lambda_auto && (chosen.mode == FusionMode::kCamue || chosen.mode == FusionMode::kFixedParams);
  for (double lambda : sweep ? lambda_grid() : std::vector<double>{resolved.config.lambda}) {
    TrainConfig c = resolved.config;
    c.lambda = lambda;
    TrainResult r = train(data, split, c);
    if (!best || r.validation.accuracy > best->validation.accuracy) {
      best = std::move(r);
      chosen = c;
    }
  }

  Checkpoint ck{best->model, chosen, dataset_fingerprint(d), best->validation, best->epochs_ran, best->best_epoch};
  save_checkpoint((out / "checkpoint.json").string(), ck);

  Json report{{"split", "validation"},
              {"mode", to_string(chosen.mode)},
              {"seed", chosen.seed},
              {"lambda", chosen.lambda},
              {"metrics", to_json(best->validation)},
              {"epochs_ran", best->epochs_ran},
              {"best_epoch", best->best_epoch}};
  if (best->gate) {
    const GateSummary g = summarize_gate(*best->gate);
    report["mean_alpha"] = g.mean_alpha;
    report["fraction_alpha_gt_beta"] = g.fraction_alpha_gt_beta;
  }
  write_text_file((out / "validation_report.json").string(), report.dump(2) + "\n");
  write_text_file((out / "validation_report.tsv").string(),
                  "split\tmode\tseed\tlambda\taccuracy\tf1\tepochs_ran\tbest_epoch\nvalidation\t" +
                      std::string(to_string(chosen.mode)) + "\t" + std::to_string(chosen.seed) + "\t" +
                      fixed(chosen.lambda, 3) + "\t" + fixed(best->validation.accuracy) + "\t" +
                      fixed(best->validation.macro_f1) + "\t" + std::to_string(best->epochs_ran) + "\t" +
                      std::to_string(best->best_epoch) + "\n");
  detail::write_manifest(out / "manifest.json", "train", to_json(chosen), chosen.seed, dataset_checksums(d),
                         detail::seconds_since(start));
  log << "validation " << acc_f1(best->validation.accuracy, best->validation.macro_f1) << "  (mode "
      << to_string(chosen.mode) << ", lambda " << fixed(chosen.lambda, 3) << ", epochs " << best->epochs_ran
      << ", best epoch " << best->best_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  int seeds = 0;  // > 0: retrain the checkpoint's configuration on seeds 0..seeds-1
  std::optional<std::string> vectors;
  std::optional<std::string> embeddings;
  std::optional<std::string> out;  // report directory; defaults to the checkpoint's directory
  std::size_t threads = 1;
};

inline void check_checkpoint_matches(const Checkpoint& ck, const DatasetDir& d) {
  if (ck.model.config.num_nodes != d.bundle.graph.n) {
    throw ConfigError("checkpoint was trained on " + std::to_string(ck.model.config.num_nodes) +
                      " users but the dataset has " + std::to_string(d.bundle.graph.n));
  }
  if (ck.model.config.num_classes != d.bundle.meta.class_names.size()) {
    throw ConfigError("checkpoint predicts " + std::to_string(ck.model.config.num_classes) +
                      " classes but the dataset declares " + std::to_string(d.bundle.meta.class_names.size()));
  }
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  const DatasetDir d = load_dataset_dir(opt.data);
  check_checkpoint_matches(ck, d);
  const TextSource text{ck.train.text_encoder, opt.vectors, opt.embeddings};
  const TrainingData data = load_training_data(d, ck.train, text);
  const fs::path out = opt.out ? fs::path(*opt.out) : fs::path(opt.checkpoint).parent_path();
  if (!out.empty()) fs::create_directories(out);

  const LabeledSplit split = make_split(data.labels, SplitRatios{}, ck.train.seed);
  RunRecord rec;
  rec.mode = ck.train.mode;
  rec.graph_encoder = ck.train.graph_encoder;
  rec.text_encoder = ck.train.text_encoder;
  rec.seed = ck.train.seed;
  rec.lambda = ck.model.config.lambda;
  rec.test = evaluate(ck.model, data, split.test);
  rec.validation = ck.validation;
  rec.epochs_ran = ck.epochs_ran;
  rec.best_epoch = ck.best_epoch;
  if (ck.model.config.mode == FusionMode::kCamue) rec.gate = summarize_gate(*predict(ck.model, data.inputs()).gate);
  std::vector<RunRecord> runs{rec};
  log << "checkpoint test " << acc_f1(rec.test.accuracy, rec.test.macro_f1) << "\n";

  if (opt.seeds > 0) {
    GridSpec spec;
    spec.modes = {ck.train.mode};
    for (int s = 0; s < opt.seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
    spec.base = ck.train;
    spec.threads = opt.threads;
    GridResult grid = run_grid(data, spec);
    for (const auto& r : grid.runs) log << "seed " << r.seed << "  " << acc_f1(r.test.accuracy, r.test.macro_f1) << "\n";
    const AggregateRow& a = grid.rows.front();
    log << "mean ± σ over " << a.runs << " seeds  " << fixed(a.mean_accuracy, 3) << " ± " << fixed(a.std_accuracy, 3)
        << " ; " << fixed(a.mean_f1, 3) << " ± " << fixed(a.std_f1, 3) << "  (max " << acc_f1(a.max_accuracy, a.max_f1)
        << ")\n";
    write_text_file((out / "eval_seeds.tsv").string(), runs_tsv(grid.runs));
    write_text_file((out / "eval_summary.tsv").string(), summary_tsv(grid.rows));
    runs.insert(runs.end(), grid.runs.begin(), grid.runs.end());
  }
  write_text_file((out / "eval_report.tsv").string(), runs_tsv(std::span<const RunRecord>(runs.data(), 1)));
  write_text_file((out / "eval_report.jsonl").string(), runs_jsonl(runs));
  return 0;
}

// ---------------------------------------------------------------------------
// grid

struct GridOptions {
  std::string data;
  std::vector<std::string> modes{"text", "link", "simple", "fixed", "camue"};
  int seeds = 10;
  TrainOptions base;  // encoder choice and hyperparameters; mode/out ignored
  std::string out;
  bool force = false;
  std::size_t threads = 1;
};

inline int cmd_grid(const GridOptions& opt, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  TrainOptions probe = opt.base;
  probe.mode = "camue";
  const ResolvedTrain resolved = resolve_train_options(probe);
  const DatasetDir d = load_dataset_dir(opt.data);
  GridSpec spec;
  bool needs_text = false;
  for (const auto& m : opt.modes) {
    spec.modes.push_back(parse_fusion_mode(m));
    needs_text = needs_text || uses_text_branch(spec.modes.back());
  }
  if (spec.modes.empty()) throw UsageError("--modes is empty");
  if (opt.seeds <= 0) throw UsageError("--seeds must be positive");
  for (int s = 0; s < opt.seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  spec.base = resolved.config;
  spec.threads = opt.threads;
  if (resolved.lambda_auto) spec.lambda_candidates = lambda_grid();
  TrainConfig text_probe = resolved.config;
  text_probe.mode = needs_text ? FusionMode::kCamue : FusionMode::kLinkOnly;
  const TrainingData data = load_training_data(d, text_probe, resolved.text);

  const fs::path out(opt.out);
  detail::ensure_empty_or_forced(out, opt.force);
  const GridResult grid = run_grid(data, spec);
  write_text_file((out / "runs.tsv").string(), runs_tsv(grid.runs));
  write_text_file((out / "runs.jsonl").string(), runs_jsonl(grid.runs));
  write_text_file((out / "summary.tsv").string(), summary_tsv(grid.rows));
  detail::write_manifest(out / "manifest.json", "grid", to_json(spec.base), 0, dataset_checksums(d),
                         detail::seconds_since(start));
  log << "mode\taccuracy ; f1 (mean ± σ over " << opt.seeds << " seeds)\n";
  for (const auto& a : grid.rows) {
    log << to_string(a.mode) << "\t" << fixed(a.mean_accuracy, 3) << " ± " << fixed(a.std_accuracy, 3) << " ; "
        << fixed(a.mean_f1, 3) << " ± " << fixed(a.std_f1, 3) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// contribmap

struct ContribOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<std::string> subgroups;
  std::optional<std::string> vectors;
  std::optional<std::string> embeddings;
  bool force = false;
};

struct ContributionRecord {
  std::size_t user = 0;
  std::string name;
  double alpha = 0.0;
  double beta = 0.0;
  int predicted = 0;
  int truth = kUnlabeled;
  std::vector<std::string> tags;
};

struct SubgroupRow {
  std::string tag;
  std::size_t users = 0;
  double percent_alpha_gt_beta = 0.0;
  double mean_alpha = 0.0;
};

inline std::vector<SubgroupRow> subgroup_summary(std::span<const ContributionRecord> records) {
  std::map<std::string, std::vector<const ContributionRecord*>> groups;
  for (const auto& r : records) {
    groups["aggregated"].push_back(&r);
    for (const auto& t : r.tags) groups[t].push_back(&r);
  }
  std::vector<SubgroupRow> rows;
  auto summarize = [](const std::string& tag, const std::vector<const ContributionRecord*>& members) {
    SubgroupRow row{tag, members.size(), 0.0, 0.0};
    for (const auto* r : members) {
      if (r->alpha > r->beta) row.percent_alpha_gt_beta += 1;
      row.mean_alpha += r->alpha;
    }
    if (!members.empty()) {
      row.percent_alpha_gt_beta *= 100.0 / static_cast<double>(members.size());
      row.mean_alpha /= static_cast<double>(members.size());
    }
    return row;
  };
  for (const auto& [tag, members] : groups)
    if (tag != "aggregated") rows.push_back(summarize(tag, members));
  rows.push_back(summarize("aggregated", groups["aggregated"]));
  return rows;
}

inline std::vector<ContributionRecord> contribution_records(const Checkpoint& ck, const DatasetDir& d,
                                                            const TrainingData& data) {
  const Prediction p = predict(ck.model, data.inputs());
  std::vector<ContributionRecord> records(d.bundle.graph.n);
  for (std::size_t u = 0; u < records.size(); ++u) {
    auto [a, b] = contribution_of(*p.gate, u);
    records[u] = ContributionRecord{u, d.bundle.graph.node_names.empty() ? "" : d.bundle.graph.node_names[u], a, b,
                                    p.predicted[u], d.bundle.labels[u], {}};
  }
  return records;
}

inline int cmd_contribmap(const ContribOptions& opt, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  if (ck.model.config.mode != FusionMode::kCamue) throw ConfigError("contribution map requires gated mode");
  const DatasetDir d = load_dataset_dir(opt.data);
  check_checkpoint_matches(ck, d);
  const TrainingData data = load_training_data(d, ck.train, TextSource{ck.train.text_encoder, opt.vectors, opt.embeddings});
  std::vector<ContributionRecord> records = contribution_records(ck, d, data);
  if (opt.subgroups) {
    for (auto& [user, tag] : load_tags(opt.subgroups.value(), records.size())) records[user].tags.push_back(tag);
  }
  const fs::path out(opt.out);
  detail::ensure_empty_or_forced(out, opt.force);

  const auto& classes = d.bundle.meta.class_names;
  std::string tsv = "user\tname\talpha\tbeta\tpredicted\ttrue\ttags\n";
  std::string grid = "# one row per user: graph weight (alpha), text weight (beta); 0 = no contribution, 1 = full\n";
  for (const auto& r : records) {
    std::string tags;
    for (const auto& t : r.tags) tags += (tags.empty() ? "" : ",") + t;
    std::string a, b;
    camue::detail::append_double(a, r.alpha);
    camue::detail::append_double(b, r.beta);
    tsv += std::to_string(r.user) + "\t" + r.name + "\t" + a + "\t" + b + "\t" +
           classes[static_cast<std::size_t>(r.predicted)] + "\t" +
           (r.truth == kUnlabeled ? std::string("NA") : classes[static_cast<std::size_t>(r.truth)]) + "\t" + tags + "\n";
    grid += a + "\t" + b + "\n";
  }
  std::string summary = "subgroup\tusers\tpercent_alpha_gt_beta\tmean_alpha\n";
  const auto rows = subgroup_summary(records);
  for (const auto& row : rows) {
    summary += row.tag + "\t" + std::to_string(row.users) + "\t" + fixed(row.percent_alpha_gt_beta, 1) + "\t" +
               fixed(row.mean_alpha) + "\n";
  }
  write_text_file((out / "contributions.tsv").string(), tsv);
  write_text_file((out / "contribution_grid.tsv").string(), grid);
  write_text_file((out / "subgroups.tsv").string(), summary);
  log << "% users with alpha > beta (aggregated): " << fixed(rows.back().percent_alpha_gt_beta, 1) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// embed-text

struct EmbedTextOptions {
  std::string texts;
  std::string vectors;
  std::string out;
  std::optional<std::size_t> n;  // defaults to 1 + the largest user id in the texts file
};

inline std::size_t infer_user_count(const std::string& texts_path) {
  std::ifstream in = camue::detail::open_for_read(texts_path);
  std::string line;
  std::size_t count = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = camue::detail::strip_cr(line);
    if (camue::detail::skippable(view)) continue;
    const std::size_t tab = view.find('\t');
    const std::string where = "at " + texts_path + ":" + std::to_string(line_no);
    if (tab == std::string_view::npos) throw IngestError("expected 'node_id<TAB>text' " + where);
    const std::size_t id = camue::detail::parse_node_id(view.substr(0, tab), static_cast<std::size_t>(-1), where);
    count = std::max(count, id + 1);
  }
  return count;
}

inline int cmd_embed_text(const EmbedTextOptions& opt, std::ostream& log) {
  const std::size_t n = opt.n.value_or(infer_user_count(opt.texts));
  const auto tokens = load_texts(opt.texts, n);
  const WordVectors vectors = load_word_vectors(opt.vectors);
  const DenseMatrix pooled = pool_word_vectors(tokens, vectors);
  write_embedding_matrix(opt.out, pooled);
  std::size_t empty_rows = 0;
  for (const auto& t : tokens) empty_rows += t.empty() ? 1 : 0;
  log << "wrote " << pooled.rows() << "x" << pooled.cols() << " embedding matrix to " << opt.out << " (" << empty_rows
      << " users without text)\n";
  return 0;
}

}  // namespace camue::cli
