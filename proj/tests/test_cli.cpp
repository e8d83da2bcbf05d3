#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "camue/cli.hpp"
#include "support/oracles.hpp"

using namespace camue;
using namespace camue::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> dir_checksums(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[e.path().filename().string()] = file_checksum(e.path().string());
  return out;
}

fs::path make_synth(const std::string& tag, SynthConfig c) {
  const fs::path dir = oracle::temp_dir(tag);
  std::ostringstream log;
  cmd_synth(SynthOptions{c, dir.string(), true}, log);
  return dir;
}

SynthConfig small(std::size_t n = 150, std::uint64_t seed = 0) {
  SynthConfig c;
  c.n = n;
  c.seed = seed;
  c.text_dim = 16;
  c.signature_vocab = 10;
  c.noise_vocab = 10;
  c.tokens_per_user = 12;
  return c;
}

TrainOptions quick(const fs::path& data, const fs::path& out, const std::string& mode) {
  TrainOptions t;
  t.data = data.string();
  t.out = out.string();
  t.mode = mode;
  t.hidden = 16;
  t.epochs = 40;
  t.patience = 40;
  return t;
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      cells.push_back(line.substr(start, tab - start));
    cells.push_back(line.substr(start));
    rows.push_back(cells);
  }
  return rows;
}

EvalOptions eval_options(const std::string& checkpoint, const std::string& data) {
  EvalOptions e;
  e.checkpoint = checkpoint;
  e.data = data;
  return e;
}

ContribOptions contrib_options(const std::string& checkpoint, const std::string& data, const std::string& out,
                               std::optional<std::string> subgroups = std::nullopt) {
  ContribOptions c;
  c.checkpoint = checkpoint;
  c.data = data;
  c.out = out;
  c.subgroups = std::move(subgroups);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

TEST(Synth, DefaultsWriteTheFileSet) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig c;
  c.n = 2000;
  const fs::path dir = make_synth("cli_synth", c);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
  for (const char* f : {"edges.tsv", "labels.tsv", "texts.tsv", "truth.tsv", "dataset.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Synth, SameSeedIdenticalDirectories) {
  const auto a = make_synth("cli_det_a", small(200, 5));
  const auto b = make_synth("cli_det_b", small(200, 5));
  const auto c = make_synth("cli_det_c", small(200, 6));
  EXPECT_EQ(dir_checksums(a), dir_checksums(b));
  EXPECT_NE(dir_checksums(a)["edges.tsv"], dir_checksums(c)["edges.tsv"]);
}

TEST(Synth, NonEmptyOutputNeedsForce) {
  const fs::path dir = oracle::temp_dir("cli_force");
  std::ofstream(dir / "keep.txt") << "x";
  std::ostringstream log;
  EXPECT_THROW(cmd_synth(SynthOptions{small(), dir.string(), false}, log), UsageError);
  EXPECT_NO_THROW(cmd_synth(SynthOptions{small(), dir.string(), true}, log));
}

// ---------------------------------------------------------------------------
// train

TEST(Train, IncompatibleFlagsAreUsageErrors) {
  TrainOptions t;
  t.mode = "text";
  t.graph_encoder = "mlp";
  EXPECT_THROW(resolve_train_options(t), UsageError);
  t = TrainOptions{};
  t.mode = "link";
  t.text_encoder = "pooled";
  EXPECT_THROW(resolve_train_options(t), UsageError);
  t = TrainOptions{};
  t.mode = "simple";
  t.graph_encoder = "mlp";
  EXPECT_THROW(resolve_train_options(t), UsageError);
  t = TrainOptions{};
  t.mode = "bogus";
  EXPECT_THROW(resolve_train_options(t), ConfigError);
}

TEST(Train, NegativeLambdaIsConfigError) {
  TrainOptions t;
  t.lambda = "-1";
  EXPECT_THROW(resolve_train_options(t), ConfigError);
  t.lambda = "0.1x";
  EXPECT_THROW(resolve_train_options(t), ConfigError);
  t.lambda = "auto";
  EXPECT_TRUE(resolve_train_options(t).lambda_auto);
}

TEST(Train, LinkModeOnClearGraphReachesNinetyPercent) {
  SynthConfig c = small(600);
  c.rho_graph = 0.95;
  c.rho_text = 0.5;
  const fs::path data = make_synth("cli_link", c);
  const fs::path out = oracle::temp_dir("cli_link_out");
  TrainOptions t = quick(data, out, "link");
  t.epochs = 150;
  t.patience = 150;
  std::ostringstream log;
  ASSERT_EQ(cmd_train(t, log), 0);
  const Json report = read_json_file((out / "validation_report.json").string());
  EXPECT_GE(report["metrics"]["accuracy"].get<double>(), 0.9) << log.str();
  for (const char* f : {"checkpoint.json", "manifest.json", "validation_report.tsv"}) EXPECT_TRUE(fs::exists(out / f));
  const Json manifest = read_json_file((out / "manifest.json").string());
  EXPECT_EQ(manifest["dataset_checksums"].size(), 5u);  // metadata, edges, labels, texts, vectors
  EXPECT_EQ(manifest["dataset_checksums"]["edges.tsv"], file_checksum((data / "edges.tsv").string()));
  EXPECT_EQ(manifest["command"], "train");
}

TEST(Train, SameSeedIdenticalCheckpoints) {
  const fs::path data = make_synth("cli_twice", small());
  const fs::path a = oracle::temp_dir("cli_twice_a"), b = oracle::temp_dir("cli_twice_b");
  std::ostringstream log;
  cmd_train(quick(data, a, "camue"), log);
  cmd_train(quick(data, b, "camue"), log);
  EXPECT_EQ(dir_checksums(a), dir_checksums(b));
  const fs::path c = oracle::temp_dir("cli_twice_c");
  TrainOptions other = quick(data, c, "camue");
  other.seed = 1;
  cmd_train(other, log);
  EXPECT_NE(dir_checksums(a)["checkpoint.json"], dir_checksums(c)["checkpoint.json"]);
}

// ---------------------------------------------------------------------------
// eval

TEST(Eval, MatchesInProcessEvaluate) {
  const fs::path data = make_synth("cli_eval", small());
  const fs::path out = oracle::temp_dir("cli_eval_out");
  std::ostringstream log;
  cmd_train(quick(data, out, "camue"), log);
  std::ostringstream eval_log;
  ASSERT_EQ(cmd_eval(eval_options((out / "checkpoint.json").string(), data.string()), eval_log), 0);

  const Checkpoint ck = load_checkpoint((out / "checkpoint.json").string());
  const DatasetDir d = load_dataset_dir(data.string());
  const TrainingData td = make_training_data(d, text_features_for(d, TextSource{}));
  const Metrics m = evaluate(ck.model, td, make_split(td.labels, SplitRatios{}, 0).test);
  EXPECT_NE(eval_log.str().find(acc_f1(m.accuracy, m.macro_f1)), std::string::npos) << eval_log.str();
  const auto rows = read_tsv(out / "eval_report.tsv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(fs::exists(out / "eval_report.jsonl"));
}

TEST(Eval, PerfectSeparabilityPrintsOnes) {
  SynthConfig c = small(200);
  c.rho_graph = 1.0;
  c.rho_text = 1.0;
  const fs::path data = make_synth("cli_perfect", c);
  const fs::path out = oracle::temp_dir("cli_perfect_out");
  std::ostringstream log;
  TrainOptions t = quick(data, out, "camue");
  t.epochs = 100;
  t.patience = 100;
  cmd_train(t, log);
  std::ostringstream eval_log;
  cmd_eval(eval_options((out / "checkpoint.json").string(), data.string()), eval_log);
  EXPECT_NE(eval_log.str().find("1.000 ; 1.000"), std::string::npos) << eval_log.str();
}

TEST(Eval, MultiSeedPrintsMeanAndSigma) {
  const fs::path data = make_synth("cli_seeds", small());
  const fs::path out = oracle::temp_dir("cli_seeds_out");
  std::ostringstream log;
  cmd_train(quick(data, out, "text"), log);
  EvalOptions e = eval_options((out / "checkpoint.json").string(), data.string());
  e.seeds = 3;
  std::ostringstream eval_log;
  cmd_eval(e, eval_log);
  EXPECT_NE(eval_log.str().find("mean ± σ over 3 seeds"), std::string::npos) << eval_log.str();
  EXPECT_EQ(read_tsv(out / "eval_seeds.tsv").size(), 4u);
}

TEST(Eval, UserCountMismatchIsError) {
  const fs::path data = make_synth("cli_mis_a", small(150));
  const fs::path other = make_synth("cli_mis_b", small(160));
  const fs::path out = oracle::temp_dir("cli_mis_out");
  std::ostringstream log;
  TrainOptions t = quick(data, out, "link");
  t.epochs = 1;
  cmd_train(t, log);
  try {
    cmd_eval(eval_options((out / "checkpoint.json").string(), other.string()), log);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("150"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("160"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// grid

TEST(Grid, WritesRowsPerModeAndSeed) {
  const fs::path data = make_synth("cli_grid", small(120));
  const fs::path out = oracle::temp_dir("cli_grid_out");
  GridOptions g;
  g.data = data.string();
  g.modes = {"link", "camue"};
  g.seeds = 2;
  g.base.hidden = 8;
  g.base.epochs = 10;
  g.base.patience = 10;
  g.out = out.string();
  g.force = true;
  std::ostringstream log;
  ASSERT_EQ(cmd_grid(g, log), 0);
  EXPECT_EQ(read_tsv(out / "runs.tsv").size(), 5u);
  EXPECT_EQ(read_tsv(out / "summary.tsv").size(), 3u);
  g.seeds = 0;
  EXPECT_THROW(cmd_grid(g, log), UsageError);
}

// ---------------------------------------------------------------------------
// contribmap

TEST(Contribmap, RequiresGatedCheckpoint) {
  const fs::path data = make_synth("cli_cm_req", small());
  const fs::path out = oracle::temp_dir("cli_cm_req_out");
  std::ostringstream log;
  TrainOptions t = quick(data, out, "fixed");
  t.epochs = 1;
  cmd_train(t, log);
  try {
    cmd_contribmap(contrib_options((out / "checkpoint.json").string(), data.string(), (out / "map").string()), log);
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "contribution map requires gated mode");
  }
}

TEST(Contribmap, UntrainedGateIsEvenSplit) {
  const fs::path data = make_synth("cli_cm_zero", small());
  const fs::path out = oracle::temp_dir("cli_cm_zero_out");
  std::ostringstream log;
  TrainOptions t = quick(data, out, "camue");
  t.epochs = 0;
  cmd_train(t, log);
  const fs::path map = out / "map";
  ASSERT_EQ(cmd_contribmap(contrib_options((out / "checkpoint.json").string(), data.string(), map.string()), log), 0);
  const auto rows = read_tsv(map / "contributions.tsv");
  ASSERT_EQ(rows.size(), 151u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(std::stod(rows[r][2]), 0.5);
    EXPECT_EQ(std::stod(rows[r][3]), 0.5);
  }
  const auto summary = read_tsv(map / "subgroups.tsv");
  EXPECT_EQ(summary.back()[0], "aggregated");
  EXPECT_EQ(summary.back()[2], "0.0");
}

TEST(Contribmap, WeightsSumToOneAndSubgroupsAreCounted) {
  const fs::path data = make_synth("cli_cm", small());
  const fs::path out = oracle::temp_dir("cli_cm_out");
  std::ostringstream log;
  cmd_train(quick(data, out, "camue"), log);
  std::ofstream(out / "tags.tsv") << "0\tbots\n1\tbots\n2\tnews\n";
  ContribOptions o = contrib_options((out / "checkpoint.json").string(), data.string(), (out / "map").string(),
                                     (out / "tags.tsv").string());
  cmd_contribmap(o, log);
  const auto grid = read_tsv(out / "map" / "contribution_grid.tsv");
  ASSERT_EQ(grid.size(), 150u);
  for (const auto& row : grid) {
    const double a = std::stod(row[0]), b = std::stod(row[1]);
    EXPECT_NEAR(a + b, 1.0, 1e-12);
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
  }
  const auto summary = read_tsv(out / "map" / "subgroups.tsv");
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[1][0], "bots");
  EXPECT_EQ(summary[1][1], "2");
  EXPECT_EQ(summary[2][0], "news");
  EXPECT_EQ(summary[3][1], "150");
  // second run is byte-identical
  o.out = (out / "map2").string();
  cmd_contribmap(o, log);
  EXPECT_EQ(dir_checksums(out / "map"), dir_checksums(out / "map2"));
}

TEST(Contribmap, SubgroupSummaryCountsAlphaAboveBeta) {
  std::vector<ContributionRecord> recs{{0, "", 0.7, 0.3, 0, 0, {"x"}},
                                       {1, "", 0.4, 0.6, 0, 0, {"x"}},
                                       {2, "", 0.5, 0.5, 0, 0, {}},
                                       {3, "", 0.9, 0.1, 0, 0, {"y"}}};
  const auto rows = subgroup_summary(recs);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_DOUBLE_EQ(rows[0].percent_alpha_gt_beta, 50.0);
  EXPECT_DOUBLE_EQ(rows[1].percent_alpha_gt_beta, 100.0);
  EXPECT_DOUBLE_EQ(rows[2].percent_alpha_gt_beta, 50.0);
  EXPECT_DOUBLE_EQ(rows[2].mean_alpha, 0.625);
}

// ---------------------------------------------------------------------------
// embed-text

TEST(EmbedText, PoolsAndRoundTrips) {
  const fs::path dir = oracle::temp_dir("cli_embed");
  std::ofstream(dir / "vec.txt") << "a 1 2\nb 3 -4\n";
  std::ofstream(dir / "texts.tsv") << "0\tA\n2\ta b zzz\n";
  std::ostringstream log;
  ASSERT_EQ(cmd_embed_text(EmbedTextOptions{(dir / "texts.tsv").string(), (dir / "vec.txt").string(),
                                            (dir / "emb.txt").string(), 4},
                           log),
            0);
  const DenseMatrix m = load_precomputed_embeddings((dir / "emb.txt").string(), 4);
  EXPECT_EQ(m, DenseMatrix::from_rows({{1, 2}, {0, 0}, {2, -1}, {0, 0}}));
  EXPECT_EQ(infer_user_count((dir / "texts.tsv").string()), 3u);
  EXPECT_THROW(cmd_embed_text(EmbedTextOptions{(dir / "texts.tsv").string(), (dir / "none.txt").string(),
                                               (dir / "o.txt").string(), std::nullopt},
                              log),
               IoError);
}
