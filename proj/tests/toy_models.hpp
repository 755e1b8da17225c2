#pragma once

// A shared trained toy surrogate for the acquisition/MI property tests: a
// 2-fidelity synthetic oracle on coarse meshes, fit briefly so the
// variational posterior carries realistic structure.

#include "bmfal/loop.hpp"

namespace toy {

inline bmfal::ExperimentConfig config(std::uint64_t seed = 1) {
  bmfal::ExperimentConfig cfg;
  cfg.problem = "synthetic";
  cfg.ladder.meshes = {bmfal::MeshSpec(5), bmfal::MeshSpec(9)};
  cfg.ladder.lambdas = {1.0, 3.0};
  cfg.ladder.eval_mesh = bmfal::MeshSpec(17);
  cfg.synthetic_discrepancy = 0.5;
  cfg.synthetic_input_dim = 2;
  cfg.model.latent_dims = {2};
  cfg.model.hidden_width = 6;
  cfg.train.learning_rate = 1e-2;
  cfg.train.epochs = 120;
  cfg.train.seed = 5;
  cfg.initial_counts = {12, 4};
  cfg.seed = seed;
  return cfg;
}

inline bmfal::MfModel trained_model(std::uint64_t seed = 1) {
  const bmfal::ExperimentConfig cfg = config(seed);
  const auto oracle = bmfal::make_oracle(cfg);
  bmfal::MfModel model(bmfal::make_model_config(cfg, *oracle), oracle->domain(),
                       bmfal::derive_seed(seed, 0x70f));
  const bmfal::Dataset data =
      bmfal::init_dataset(*oracle, cfg.initial_counts, bmfal::derive_seed(seed, 0xda7a));
  bmfal::train(model, data, cfg.train);
  return model;
}

// Cached instance: training once per process keeps the suites fast.
inline const bmfal::MfModel& shared_trained_model() {
  static const bmfal::MfModel model = trained_model(1);
  return model;
}

}  // namespace toy
