#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "camue/cli.hpp"

namespace {

void add_train_flags(CLI::App& cmd, camue::cli::TrainOptions& t) {
  cmd.add_option("--text-encoder", t.text_encoder, "pooled | precomputed");
  cmd.add_option("--graph-encoder", t.graph_encoder, "rgcn | mlp");
  cmd.add_option("--vectors", t.vectors, "word-vector file (overrides dataset.json)");
  cmd.add_option("--embeddings", t.embeddings, "precomputed embedding matrix (overrides dataset.json)");
  cmd.add_option("--lambda", t.lambda, "residual weight, or 'auto' to pick from {0, 0.05, 0.1, 0.2} on validation")
      ->capture_default_str();
  cmd.add_option("--epochs", t.epochs)->capture_default_str();
  cmd.add_option("--patience", t.patience)->capture_default_str();
  cmd.add_option("--lr", t.learning_rate)->capture_default_str();
  cmd.add_option("--hidden", t.hidden)->capture_default_str();
  cmd.add_option("--dropout", t.dropout)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  camue::tune_allocator();
  CLI::App app{"camue: contribution-aware multimodal user embeddings"};
  app.set_version_flag("--version", std::string(camue::kVersion));
  app.require_subcommand(1);

  camue::cli::SynthOptions synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic two-modality dataset");
  s->add_option("--n", synth.config.n)->capture_default_str();
  s->add_option("--relations", synth.config.relations)->capture_default_str();
  s->add_option("--classes", synth.config.classes)->capture_default_str();
  s->add_option("--rho-graph", synth.config.rho_graph)->capture_default_str();
  s->add_option("--rho-text", synth.config.rho_text)->capture_default_str();
  s->add_option("--conflict", synth.config.conflict_fraction, "fraction of users whose text comes from another class")
      ->capture_default_str();
  s->add_option("--label-fraction", synth.config.label_fraction)->capture_default_str();
  s->add_option("--degree", synth.config.mean_out_degree, "mean out-degree per relation")->capture_default_str();
  s->add_option("--tokens", synth.config.tokens_per_user)->capture_default_str();
  s->add_option("--signature-vocab", synth.config.signature_vocab, "signature words per class")->capture_default_str();
  s->add_option("--noise-vocab", synth.config.noise_vocab)->capture_default_str();
  s->add_option("--text-dim", synth.config.text_dim)->capture_default_str();
  s->add_option("--seed", synth.config.seed)->capture_default_str();
  s->add_option("--out", synth.out)->required();
  s->add_flag("--force", synth.force);

  camue::cli::TrainOptions train;
  auto* t = app.add_subcommand("train", "train one model and write a checkpoint");
  t->add_option("--data", train.data)->required();
  t->add_option("--mode", train.mode, "camue | fixed | simple | link | text")->capture_default_str();
  t->add_option("--seed", train.seed)->capture_default_str();
  t->add_option("--out", train.out)->required();
  t->add_flag("--force", train.force);
  add_train_flags(*t, train);

  camue::cli::EvalOptions eval;
  auto* e = app.add_subcommand("eval", "test-set metrics for a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--data", eval.data)->required();
  e->add_option("--seeds", eval.seeds, "also retrain the checkpoint's configuration on seeds 0..K-1");
  e->add_option("--vectors", eval.vectors);
  e->add_option("--embeddings", eval.embeddings);
  e->add_option("--out", eval.out, "report directory (default: next to the checkpoint)");
  e->add_option("--threads", eval.threads)->capture_default_str();

  camue::cli::GridOptions grid;
  auto* g = app.add_subcommand("grid", "train and test every mode over several seeds");
  g->add_option("--data", grid.data)->required();
  g->add_option("--modes", grid.modes)->delimiter(',')->capture_default_str();
  g->add_option("--seeds", grid.seeds)->capture_default_str();
  g->add_option("--out", grid.out)->required();
  g->add_option("--threads", grid.threads)->capture_default_str();
  g->add_flag("--force", grid.force);
  add_train_flags(*g, grid.base);

  camue::cli::ContribOptions contrib;
  auto* c = app.add_subcommand("contribmap", "per-user graph/text weights and subgroup summary");
  c->add_option("--checkpoint", contrib.checkpoint)->required();
  c->add_option("--data", contrib.data)->required();
  c->add_option("--out", contrib.out)->required();
  c->add_option("--subgroups", contrib.subgroups, "TSV of node_id<TAB>tag");
  c->add_option("--vectors", contrib.vectors);
  c->add_option("--embeddings", contrib.embeddings);
  c->add_flag("--force", contrib.force);

  camue::cli::EmbedTextOptions embed;
  auto* x = app.add_subcommand("embed-text", "mean-pool word vectors per user");
  x->add_option("--texts", embed.texts)->required();
  x->add_option("--vectors", embed.vectors)->required();
  x->add_option("--out", embed.out)->required();
  x->add_option("--n", embed.n, "number of users (default: largest id + 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "camue: usage-error: " << err.what() << "\n";
    return 2;
  }

  try {
    if (*s) return camue::cli::cmd_synth(synth, std::cout);
    if (*t) return camue::cli::cmd_train(train, std::cout);
    if (*e) return camue::cli::cmd_eval(eval, std::cout);
    if (*g) return camue::cli::cmd_grid(grid, std::cout);
    if (*c) return camue::cli::cmd_contribmap(contrib, std::cout);
    if (*x) return camue::cli::cmd_embed_text(embed, std::cout);
  } catch (const camue::UsageError& err) {
    std::cerr << "camue: " << err.kind() << ": " << err.what() << "\n";
    return 2;
  } catch (const camue::Error& err) {
    std::cerr << "camue: " << err.kind() << ": " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "camue: internal-error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
