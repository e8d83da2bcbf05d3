#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "camue/model.hpp"
#include "support/oracles.hpp"

using namespace camue;

namespace {

std::vector<DenseMatrix> dense_relations(const NormalizedGraph& g) {
  std::vector<DenseMatrix> out;
  for (const auto& a : g.relations) out.push_back(a.to_dense());
  return out;
}

// Non-zero biases and attention logits so every parameter shows up in the output.
void perturb(RgcnParams& p, Rng& rng) {
  for (auto& layer : p.layers) {
    layer.bias.value = oracle::random_dense(1, layer.bias.value.cols(), rng, 0.3);
    layer.relation_logits.value = oracle::random_dense(1, layer.relation_logits.value.cols(), rng);
  }
}

void perturb(ThreeLayerMlp& p, Rng& rng) {
  for (Parameter* b : {&p.b1, &p.b2, &p.b3}) b->value = oracle::random_dense(1, b->value.cols(), rng, 0.3);
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = d(rng);
  return y;
}

std::vector<std::size_t> all_nodes(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

WordVectors tiny_vectors() {
  WordVectors wv;
  wv.dim = 3;
  wv.words = {"cat", "dog", "fish"};
  for (std::size_t i = 0; i < wv.words.size(); ++i) wv.index[wv.words[i]] = i;
  wv.table = DenseMatrix::from_rows({{1, 2, 3}, {3, 6, -1}, {0.5, 0.25, 8}});
  return wv;
}

}  // namespace

TEST(Rgcn, MatchesDenseReferenceOnRandomGraphs) {
  Rng rng(100);
  std::uniform_int_distribution<std::size_t> size(2, 20);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = size(rng);
    const NormalizedGraph g = normalize(oracle::random_graph(n, 1 + trial % 3, 0.2, rng));
    // alternate widening and narrowing layers so both evaluation orders run
    const RgcnDims dims = trial % 2 == 0 ? RgcnDims{4, 7, 5} : RgcnDims{9, 3, 6};
    RgcnParams p = make_rgcn(g.relations.size(), dims, n, rng);
    perturb(p, rng);
    Tape tape;
    const DenseMatrix sparse = tape.value(rgcn_forward(tape, g, p, ForwardMode{}));
    const DenseMatrix dense = oracle::dense_rgcn(dense_relations(g), p, p.node_embedding->value);
    ASSERT_EQ(sparse.rows(), n);
    ASSERT_EQ(sparse.cols(), dims.output);
    EXPECT_LT(max_abs_diff(sparse, dense), 1e-10) << "trial " << trial << " n=" << n;
  }
}

TEST(Rgcn, SingleIsolatedNodeIsAffineImageOfItsEmbedding) {
  Rng rng(1);
  const NormalizedGraph g = normalize(build_graph(std::vector<Edge>{}, 1, std::vector<std::string>{"follow"}));
  RgcnParams p = make_rgcn(2, RgcnDims{2, 2, 2}, 1, rng);
  for (auto& layer : p.layers) {
    for (auto& w : layer.relation_weights) w.value = DenseMatrix::identity(2);
    layer.self_weight.value = DenseMatrix::identity(2);
  }
  p.node_embedding->value = DenseMatrix::from_rows({{0.5, 2.0}});
  Tape tape;
  // attention sums to 1 and the only neighbour is the node itself: each layer maps x to 2x
  const DenseMatrix out = tape.value(rgcn_forward(tape, g, p, ForwardMode{}));
  EXPECT_DOUBLE_EQ(out(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 8.0);
}

TEST(Rgcn, PermutationEquivariant) {
  Rng rng(2);
  const std::size_t n = 15;
  const HeteroGraph g = oracle::random_graph(n, 2, 0.2, rng);
  RgcnParams p = make_rgcn(4, RgcnDims{6, 6, 4}, n, rng);
  perturb(p, rng);
  std::vector<std::size_t> perm = all_nodes(n);
  std::shuffle(perm.begin(), perm.end(), rng);

  Tape t1;
  const DenseMatrix base = t1.value(rgcn_forward(t1, normalize(g), p, ForwardMode{}));
  RgcnParams q = p;
  q.node_embedding->value = permute_rows(p.node_embedding->value, perm);
  Tape t2;
  const DenseMatrix moved = t2.value(rgcn_forward(t2, normalize(permute_nodes(g, perm)), q, ForwardMode{}));
  EXPECT_LT(max_abs_diff(moved, permute_rows(base, perm)), 1e-10);
}

TEST(Rgcn, RelationAttentionIsProbabilityVector) {
  Rng rng(3);
  RgcnParams p = make_rgcn(6, RgcnDims{3, 3, 3}, 4, rng);
  perturb(p, rng);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto w = relation_attention(p, l);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double v : w) EXPECT_GT(v, 0.0);
  }
}

TEST(Rgcn, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  const std::size_t n = 6;
  const NormalizedGraph g = normalize(oracle::random_graph(n, 2, 0.3, rng));
  for (const RgcnDims dims : {RgcnDims{3, 5, 4}, RgcnDims{5, 3, 4}}) {
    RgcnParams p = make_rgcn(g.relations.size(), dims, n, rng);
    perturb(p, rng);
    const auto labels = random_labels(n, 4, rng);
    const auto mask = all_nodes(n);
    auto loss = [&](Tape& t) { return t.cross_entropy(rgcn_forward(t, g, p, ForwardMode{}), labels, mask); };
    for (const auto& r : oracle::check_gradients(p.parameters(), loss)) {
      EXPECT_LT(r.relative_error, 1e-4) << r.parameter;
      EXPECT_GT(r.numeric_norm, 0.0) << r.parameter;
    }
  }
}

TEST(Rgcn, ShapeMismatchesRejected) {
  Rng rng(5);
  const NormalizedGraph g = normalize(oracle::random_graph(5, 1, 0.3, rng));
  RgcnParams wrong_relations = make_rgcn(3, RgcnDims{2, 2, 2}, 5, rng);
  Tape tape;
  EXPECT_THROW(rgcn_forward(tape, g, wrong_relations, ForwardMode{}), ShapeError);
  RgcnParams p = make_rgcn(2, RgcnDims{2, 2, 2}, std::nullopt, rng);
  EXPECT_THROW(rgcn_forward(tape, g, p, tape.constant(DenseMatrix(4, 2)), ForwardMode{}), ShapeError);
  EXPECT_THROW(rgcn_forward(tape, g, p, ForwardMode{}), ConfigError);
}

TEST(Rgcn, TrainingModeAppliesDropoutBetweenLayers) {
  Rng rng(6);
  const NormalizedGraph g = normalize(oracle::random_graph(8, 1, 0.3, rng));
  RgcnParams p = make_rgcn(2, RgcnDims{4, 4, 4}, 8, rng);
  Rng drop(9);
  Tape a, b;
  const DenseMatrix eval = a.value(rgcn_forward(a, g, p, ForwardMode{}));
  const DenseMatrix train = b.value(rgcn_forward(b, g, p, ForwardMode{true, 0.5, &drop}));
  EXPECT_GT(max_abs_diff(eval, train), 0.0);
  Tape c;
  EXPECT_THROW(rgcn_forward(c, g, p, ForwardMode{true, 0.5, nullptr}), ConfigError);
}

TEST(AdjMlp, IsolatedNodeFollowsBiasPath) {
  Rng rng(10);
  const std::vector<Edge> edges{{0, 1, "follow", 0}, {1, 2, "follow", 0}};
  const NormalizedGraph g = normalize(build_graph(edges, 4, std::vector<std::string>{"follow"}));
  AdjMlpParams p = make_adj_mlp(4, MlpDims{0, 5, 3}, rng);
  perturb(p, rng);
  Tape tape;
  const DenseMatrix out = tape.value(adj_mlp_forward(tape, g.summed_adjacency, p, ForwardMode{}));
  // node 3 has an all-zero row: relu(relu(b1) W2 + b2) W3 + b3
  DenseMatrix h = oracle::dense_relu(p.b1.value);
  h = oracle::naive_matmul(h, p.w2.value);
  axpy(h, p.b2.value, 1.0);
  h = oracle::naive_matmul(oracle::dense_relu(h), p.w3.value);
  axpy(h, p.b3.value, 1.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(3, j), h(0, j), 1e-14);
}

TEST(AdjMlp, IdenticalNeighbourhoodsGiveIdenticalEmbeddings) {
  Rng rng(11);
  const std::vector<Edge> edges{{0, 2, "follow", 0}, {0, 3, "follow", 0}, {1, 2, "follow", 0}, {1, 3, "follow", 0}};
  const NormalizedGraph g = normalize(build_graph(edges, 4, std::vector<std::string>{"follow"}));
  AdjMlpParams p = make_adj_mlp(4, MlpDims{0, 6, 3}, rng);
  perturb(p, rng);
  Tape tape;
  const DenseMatrix out = tape.value(adj_mlp_forward(tape, g.summed_adjacency, p, ForwardMode{}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out(0, j), out(1, j));
}

TEST(AdjMlp, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  const std::size_t n = 6;
  const NormalizedGraph g = normalize(oracle::random_graph(n, 2, 0.35, rng));
  AdjMlpParams p = make_adj_mlp(n, MlpDims{0, 5, 3}, rng);
  perturb(p, rng);
  const auto labels = random_labels(n, 3, rng);
  const auto mask = all_nodes(n);
  auto loss = [&](Tape& t) {
    return t.cross_entropy(adj_mlp_forward(t, g.summed_adjacency, p, ForwardMode{}), labels, mask);
  };
  for (const auto& r : oracle::check_gradients(p.parameters(), loss)) {
    EXPECT_LT(r.relative_error, 1e-4) << r.parameter;
    EXPECT_GT(r.numeric_norm, 0.0) << r.parameter;
  }
}

TEST(AdjMlp, WidthMismatchIsShapeError) {
  Rng rng(13);
  AdjMlpParams p = make_adj_mlp(5, MlpDims{0, 2, 2}, rng);
  Tape tape;
  EXPECT_THROW(adj_mlp_forward(tape, SparseMatrix(4, 4), p, ForwardMode{}), ShapeError);
}

TEST(TextMlp, ZeroInputFollowsBiasPathAndEqualRowsStayEqual) {
  Rng rng(14);
  TextMlpParams p = make_text_mlp(4, MlpDims{0, 5, 3}, rng);
  perturb(p, rng);
  DenseMatrix x(3, 4);
  x.row(1)[0] = x.row(2)[0] = 0.7;
  x.row(1)[3] = x.row(2)[3] = -1.2;
  Tape tape;
  const DenseMatrix out = tape.value(text_mlp_forward(tape, tape.constant(x), p, ForwardMode{}));
  DenseMatrix h = oracle::naive_matmul(oracle::dense_relu(p.b1.value), p.w2.value);
  axpy(h, p.b2.value, 1.0);
  h = oracle::naive_matmul(oracle::dense_relu(h), p.w3.value);
  axpy(h, p.b3.value, 1.0);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(out(0, j), h(0, j), 1e-14);
    EXPECT_EQ(out(1, j), out(2, j));
  }
}

TEST(TextMlp, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  TextMlpParams p = make_text_mlp(7, MlpDims{0, 6, 3}, rng);
  perturb(p, rng);
  const DenseMatrix x = oracle::random_dense(6, 7, rng);
  const auto labels = random_labels(6, 3, rng);
  const auto mask = all_nodes(6);
  auto loss = [&](Tape& t) { return t.cross_entropy(text_mlp_forward(t, t.constant(x), p, ForwardMode{}), labels, mask); };
  for (const auto& r : oracle::check_gradients(p.parameters(), loss)) {
    EXPECT_LT(r.relative_error, 1e-4) << r.parameter;
    EXPECT_GT(r.numeric_norm, 0.0) << r.parameter;
  }
}

TEST(TextMlp, WidthMismatchIsShapeError) {
  Rng rng(16);
  TextMlpParams p = make_text_mlp(5, MlpDims{0, 2, 2}, rng);
  Tape tape;
  EXPECT_THROW(text_mlp_forward(tape, tape.constant(DenseMatrix(3, 4)), p, ForwardMode{}), ShapeError);
  EXPECT_THROW(make_text_mlp(0, MlpDims{}, rng), ConfigError);
}

TEST(EndToEnd, EveryParameterOfEveryModePassesFiniteDifferences) {
  Rng rng(17);
  const std::size_t n = 6;
  const NormalizedGraph g = normalize(oracle::random_graph(n, 2, 0.35, rng));
  const DenseMatrix text = oracle::random_dense(n, 5, rng);
  const auto labels = random_labels(n, 3, rng);
  const auto mask = all_nodes(n);
  const ModelInputs in{&g, &text};
  for (FusionMode mode : {FusionMode::kCamue, FusionMode::kFixedParams, FusionMode::kSimpleFusion,
                          FusionMode::kTextOnly, FusionMode::kLinkOnly}) {
    for (GraphEncoderKind enc : {GraphEncoderKind::kRgcn, GraphEncoderKind::kMlp}) {
      if (mode == FusionMode::kSimpleFusion && enc == GraphEncoderKind::kMlp) continue;
      ModelConfig cfg;
      cfg.mode = mode;
      cfg.graph_encoder = enc;
      cfg.num_nodes = n;
      cfg.num_relations = g.relations.size();
      cfg.text_dim = 5;
      cfg.num_classes = 3;
      cfg.hidden = 4;
      cfg.gate = GateDims{5, 3};
      cfg.dropout = 0.0;
      Model model = make_model(cfg, rng);
      if (model.gate) model.gate->w3.value = oracle::random_dense(3, 2, rng);
      if (model.rgcn) perturb(*model.rgcn, rng);
      // zero biases can leave pre-activations exactly on the ReLU kink
      if (model.adj_mlp) perturb(*model.adj_mlp, rng);
      if (model.text_mlp) perturb(*model.text_mlp, rng);
      auto loss = [&](Tape& t) { return t.cross_entropy(forward(t, model, in, ForwardMode{}).logits, labels, mask); };
      for (const auto& r : oracle::check_gradients(model.parameters(), loss)) {
        EXPECT_LT(r.relative_error, 1e-4) << to_string(mode) << "/" << to_string(enc) << " " << r.parameter;
        // only the fixed-params mode carries a gate it never reads
        if (mode == FusionMode::kFixedParams && r.parameter.starts_with("gate.")) {
          EXPECT_EQ(r.numeric_norm, 0.0) << r.parameter;
        } else {
          EXPECT_GT(r.numeric_norm, 0.0) << to_string(mode) << "/" << to_string(enc) << " " << r.parameter;
        }
      }
    }
  }
}

TEST(Tokenize, LowercasesAndDropsUrlsAndMentions) {
  EXPECT_EQ(tokenize("Hello @bob see https://x.co/a WWW.site.org and http://y NOW"),
            (Tokens{"hello", "see", "and", "now"}));
  EXPECT_TRUE(tokenize("   \t ").empty());
}

TEST(PoolWordVectors, EmptyTextGivesZeroRow) {
  const std::vector<Tokens> users{{}, {"unknown", "words"}};
  const DenseMatrix out = pool_word_vectors(users, tiny_vectors());
  EXPECT_EQ(out, DenseMatrix(2, 3));
}

TEST(PoolWordVectors, SingleTokenIsItsVectorVerbatim) {
  const std::vector<Tokens> users{{"dog"}};
  const DenseMatrix out = pool_word_vectors(users, tiny_vectors());
  EXPECT_EQ(out, DenseMatrix::from_rows({{3, 6, -1}}));
}

TEST(PoolWordVectors, TwoTokensGiveMidpointAndSkipUnknowns) {
  const std::vector<Tokens> users{{"cat", "zebra", "DOG"}};
  const DenseMatrix out = pool_word_vectors(users, tiny_vectors());
  EXPECT_EQ(out, DenseMatrix::from_rows({{2, 4, 1}}));
}

TEST(PoolWordVectors, OrderInvariant) {
  const std::vector<Tokens> users{{"cat", "fish", "dog", "fish"}, {"fish", "dog", "fish", "cat"}};
  const DenseMatrix out = pool_word_vectors(users, tiny_vectors());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out(0, j), out(1, j), 1e-15);
}
