#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bmfal/acquisition.hpp"
#include "bmfal/model.hpp"
#include "bmfal/optimizer.hpp"
#include "bmfal/planner.hpp"
#include "bmfal/rational.hpp"
#include "bmfal/simulators.hpp"

namespace bmfal {

enum class Strategy {
  kBmfalBc,    // batch plan via weighted greedy, one retrain per batch
  kDmfalBc,    // sequential: argmax of the per-pair score, retrain per query
  kMfalBc,     // sequential: argmax of the expected-MI score / cost
  kDmfalBcRf,  // sequential: random fidelity, maximize the pairwise MI
  kMfalBcRf,   // sequential: random fidelity, maximize the expected MI
  kBatchFrBc,  // random fidelity and input until the budget is exhausted
};

Strategy strategy_from_string(const std::string& s);
std::string strategy_to_string(Strategy s);
std::vector<Strategy> all_strategies();

struct ModelOptions {
  std::vector<int> latent_dims = {4};  // broadcast to every fidelity when a single entry
  int hidden_width = 16;
  int hidden_layers = 2;
  std::string cov_type = "full";  // "full" | "diag"
};

struct ExperimentConfig {
  std::string problem = "synthetic";
  FidelityLadder ladder;
  double synthetic_discrepancy = 0.5;
  int synthetic_input_dim = 2;
  ModelOptions model;
  TrainConfig train;
  double budget = 20.0;
  int num_batches = 25;
  std::vector<int> initial_counts;
  int mc_samples = 20;
  OptimizerConfig optimizer;
  int test_size = 128;
  std::uint64_t test_seed = 9001;
  Strategy strategy = Strategy::kBmfalBc;
  std::uint64_t seed = 0;
  int inner_epochs = 50;          // reduced epochs for per-query retraining
  bool record_walltime = false;   // measured times break byte determinism

  void validate() const;
};

// One active-learning step's outcome.
struct RunRecord {
  int batch_index = 0;
  Rational accumulated_cost;      // over acquired examples, excluding the initial set
  double nrmse = 0.0;
  std::vector<int> batch_counts;  // acquired this batch, per fidelity
  double wall_seconds = 0.0;
  Strategy strategy = Strategy::kBmfalBc;
  std::uint64_t seed = 0;
};

// Uniformly sampled initial data: counts_per_fidelity[m] examples at
// fidelity m.
Dataset init_dataset(const SimulatorOracle& oracle, const std::vector<int>& counts_per_fidelity,
                     std::uint64_t seed);

// RMSE over all test outputs divided by the root mean square of the truths.
double nrmse(const std::vector<Eigen::VectorXd>& predictions,
             const std::vector<Eigen::VectorXd>& truths);

struct EvalSet {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> truths;  // on the ladder's eval mesh
};

EvalSet make_eval_set(const SimulatorOracle& oracle, int size, std::uint64_t seed);

// Top-fidelity prediction interpolated onto the evaluation mesh.
Eigen::VectorXd predict_on_eval_mesh(const MfModel& model, const FidelityLadder& ladder,
                                     const Eigen::VectorXd& x);
double eval_nrmse(const MfModel& model, const FidelityLadder& ladder, const EvalSet& eval);

struct LoopState {
  MfModel model;
  Dataset dataset;
  Rational accumulated_cost;
};

ModelConfig make_model_config(const ExperimentConfig& config, const SimulatorOracle& oracle);
CostModel make_cost_model(const ExperimentConfig& config);
std::unique_ptr<SimulatorOracle> make_oracle(const ExperimentConfig& config);

// Plans/acquires one batch under the strategy, retrains on the grown
// dataset, and evaluates. The batch never exceeds the budget; if nothing is
// affordable the record carries an empty batch and the nRMSE is unchanged.
RunRecord run_step(LoopState& state, const SimulatorOracle& oracle, const EvalSet& eval,
                   const ExperimentConfig& config, int batch_index);

// Full protocol: initial data, initial training, then num_batches steps.
// Record 0 is the pre-acquisition baseline. When out_dir is nonempty, writes
// results.csv, records.jsonl, dataset.jsonl, and model.json there.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const std::string& out_dir);

// The CSV contract: header plus one row per record, columns
// strategy,seed,batch_index,accumulated_cost,nrmse,wall_seconds,n_fid_1..M.
// n_fid columns count acquired examples per fidelity in that batch.
std::string records_to_csv(const std::vector<RunRecord>& records, int num_fidelities,
                           bool record_walltime);

}  // namespace bmfal
