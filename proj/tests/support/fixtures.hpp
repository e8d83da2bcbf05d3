#pragma once

// Small synthetic datasets built in memory for tests.

#include "camue/data_io.hpp"
#include "camue/training.hpp"

namespace fixture {

inline camue::SynthConfig small_config(std::size_t n = 60, std::uint64_t seed = 0) {
  camue::SynthConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.text_dim = 16;
  cfg.signature_vocab = 10;
  cfg.noise_vocab = 10;
  cfg.tokens_per_user = 12;
  return cfg;
}

inline camue::TrainingData training_data(const camue::SynthDataset& s) {
  camue::TrainingData t;
  t.graph = camue::normalize(s.bundle.graph);
  t.text = camue::pool_word_vectors(s.bundle.tokens, s.vectors);
  t.labels = s.bundle.labels;
  t.num_classes = s.bundle.meta.class_names.size();
  return t;
}

inline camue::TrainingData training_data(const camue::SynthConfig& cfg) {
  return training_data(camue::generate_synthetic(cfg));
}

inline camue::TrainConfig quick_train(camue::FusionMode mode, std::uint64_t seed = 0) {
  camue::TrainConfig c;
  c.mode = mode;
  c.seed = seed;
  c.hidden = 16;
  c.epochs = 40;
  c.patience = 40;
  c.gate = camue::GateDims{8, 4};
  return c;
}

}  // namespace fixture
