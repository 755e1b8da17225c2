// Command-line front end: multi-fidelity solvers, initial data generation,
// batch planning, full active-learning runs, and checkpoint evaluation.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bmfal/delta.hpp"
#include "bmfal/io.hpp"
#include "bmfal/loop.hpp"

namespace {

Eigen::VectorXd parse_input_vector(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) vals.push_back(std::stod(tok));
  }
  if (vals.empty()) throw bmfal::ContractError("--input expects a comma-separated vector");
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

bmfal::ExperimentConfig default_config_for(const std::string& problem) {
  bmfal::ExperimentConfig cfg;
  cfg.problem = problem;
  if (problem == "synthetic") {
    cfg.ladder.meshes = {bmfal::MeshSpec(9), bmfal::MeshSpec(17)};
    cfg.ladder.lambdas = {1.0, 3.0};
    cfg.ladder.eval_mesh = bmfal::MeshSpec(33);
  } else {
    cfg.ladder.meshes = {bmfal::MeshSpec(17), bmfal::MeshSpec(33)};
    cfg.ladder.lambdas = {1.0, 3.0};
    cfg.ladder.eval_mesh = bmfal::MeshSpec(65);
  }
  cfg.initial_counts = {10, 2};
  return cfg;
}

std::vector<int> parse_counts(const std::string& csv) {
  std::vector<int> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) vals.push_back(std::stoi(tok));
  }
  return vals;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bmfal: budget-constrained batch multi-fidelity active learning"};
  app.require_subcommand(1);

  std::string config_path, out_path, problem = "synthetic", input_csv, counts_csv, strategy_str,
              checkpoint_path, dataset_path, mode_str = "standard";
  int fidelity = 1;
  std::uint64_t seed = 0;
  double budget = -1.0;
  int batches = -1;
  bool have_seed = false;

  // solve: run one simulator query and dump the field as JSON
  auto* solve = app.add_subcommand("solve", "solve one multi-fidelity query");
  solve->add_option("--problem", problem, "poisson | heat | synthetic")->required();
  solve->add_option("--fidelity", fidelity, "1-based fidelity index")->required();
  solve->add_option("--input", input_csv, "comma-separated input vector")->required();
  solve->add_option("--config", config_path, "experiment config JSON");
  solve->add_option("--out", out_path, "output file (default: stdout)");

  auto* gen = app.add_subcommand("gen-initial", "generate an initial dataset");
  gen->add_option("--problem", problem, "poisson | heat | synthetic");
  gen->add_option("--config", config_path, "experiment config JSON");
  gen->add_option("--counts", counts_csv, "per-fidelity example counts, e.g. 10,2");
  gen->add_option("--seed", seed, "sampling seed");
  gen->add_option("--out", out_path, "dataset JSONL path")->required();

  auto* plan = app.add_subcommand("plan", "train on a dataset and plan one batch");
  plan->add_option("--config", config_path, "experiment config JSON")->required();
  plan->add_option("--dataset", dataset_path, "dataset JSONL")->required();
  plan->add_option("--mode", mode_str, "standard | exceed-once");
  plan->add_option("--out", out_path, "plan JSON path (default: stdout)");

  auto* run = app.add_subcommand("run", "run the active-learning protocol");
  run->add_option("--config", config_path, "experiment config JSON");
  run->add_option("--strategy", strategy_str, "BMFAL_BC | DMFAL_BC | MFAL_BC | DMFAL_BC_RF | MFAL_BC_RF | BATCH_FR_BC");
  run->add_option("--problem", problem, "poisson | heat | synthetic");
  run->add_option("--budget", budget, "budget per batch");
  run->add_option("--batches", batches, "number of batches");
  auto* seed_opt = run->add_option("--seed", seed, "run seed");
  run->add_option("--out", out_path, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint's nRMSE");
  eval->add_option("--config", config_path, "experiment config JSON")->required();
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint JSON")->required();
  eval->add_option("--out", out_path, "output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  try {
    auto emit = [&](const std::string& text) {
      if (out_path.empty())
        std::cout << text << "\n";
      else
        bmfal::write_text_file(out_path, text + "\n");
    };

    if (solve->parsed()) {
      bmfal::ExperimentConfig cfg =
          config_path.empty() ? default_config_for(problem) : bmfal::load_config(config_path);
      if (!config_path.empty()) problem = cfg.problem;
      auto oracle = bmfal::make_oracle(cfg.problem.empty() ? problem : problem, cfg.ladder,
                                       nullptr);
      bmfal::SyntheticSpec spec;
      spec.input_dim = cfg.synthetic_input_dim;
      spec.discrepancy = cfg.synthetic_discrepancy;
      oracle = bmfal::make_oracle(problem, cfg.ladder, &spec);
      const Eigen::VectorXd x = parse_input_vector(input_csv);
      if (fidelity < 1 || fidelity > oracle->num_fidelities())
        throw bmfal::ContractError("--fidelity out of range");
      auto res = oracle->query(x, fidelity - 1);
      bmfal::Json j;
      j["problem"] = problem;
      j["fidelity"] = fidelity;
      j["mesh_n"] = oracle->ladder().meshes[fidelity - 1].n;
      j["cost"] = res.cost;
      j["field"] = std::vector<double>(res.y.data(), res.y.data() + res.y.size());
      emit(j.dump());
      return 0;
    }

    if (gen->parsed()) {
      bmfal::ExperimentConfig cfg =
          config_path.empty() ? default_config_for(problem) : bmfal::load_config(config_path);
      auto oracle = bmfal::make_oracle(cfg);
      std::vector<int> counts = counts_csv.empty() ? cfg.initial_counts : parse_counts(counts_csv);
      const bmfal::Dataset data = bmfal::init_dataset(*oracle, counts, seed);
      bmfal::write_dataset_jsonl(data, out_path);
      std::cout << "wrote " << data.size() << " examples to " << out_path << "\n";
      return 0;
    }

    if (plan->parsed()) {
      const bmfal::ExperimentConfig cfg = bmfal::load_config(config_path);
      auto oracle = bmfal::make_oracle(cfg);
      bmfal::Dataset data = bmfal::read_dataset_jsonl(dataset_path);
      bmfal::MfModel model(bmfal::make_model_config(cfg, *oracle), oracle->domain(),
                           bmfal::derive_seed(cfg.seed, 0x30de1));
      bmfal::TrainConfig tc = cfg.train;
      tc.seed = bmfal::derive_seed(cfg.seed, 0x7a21, cfg.train.seed);
      if (!data.empty()) bmfal::train(model, data, tc);
      const auto mc = bmfal::McInputSet::draw(oracle->domain(), cfg.mc_samples,
                                              bmfal::derive_seed(cfg.seed, 0xba7c, 1));
      const auto mode =
          mode_str == "exceed-once" ? bmfal::PlanMode::kExceedOnce : bmfal::PlanMode::kStandard;
      const bmfal::Plan p =
          bmfal::plan_batch(model, bmfal::make_cost_model(cfg), cfg.optimizer, mc, mode);
      emit(bmfal::plan_to_json(p).dump(2));
      return 0;
    }

    if (run->parsed()) {
      bmfal::ExperimentConfig cfg =
          config_path.empty() ? default_config_for(problem) : bmfal::load_config(config_path);
      if (run->count("--problem") > 0 && config_path.empty()) cfg.problem = problem;
      if (!strategy_str.empty()) cfg.strategy = bmfal::strategy_from_string(strategy_str);
      if (budget > 0) cfg.budget = budget;
      if (batches >= 0) cfg.num_batches = batches;
      if (have_seed) cfg.seed = seed;
      const auto records = bmfal::run_experiment(cfg, out_path);
      std::printf("%-12s %5s %12s %10s\n", "strategy", "batch", "cost", "nrmse");
      for (const auto& r : records)
        std::printf("%-12s %5d %12.4f %10.6f\n", bmfal::strategy_to_string(r.strategy).c_str(),
                    r.batch_index, r.accumulated_cost.to_double(), r.nrmse);
      std::cout << "artifacts in " << out_path << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const bmfal::ExperimentConfig cfg = bmfal::load_config(config_path);
      auto oracle = bmfal::make_oracle(cfg);
      const bmfal::MfModel model = bmfal::load_model(checkpoint_path);
      const auto eval_set = bmfal::make_eval_set(*oracle, cfg.test_size, cfg.test_seed);
      bmfal::Json j;
      j["nrmse"] = bmfal::eval_nrmse(model, cfg.ladder, eval_set);
      j["test_size"] = cfg.test_size;
      emit(j.dump());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
