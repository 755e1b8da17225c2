#include "bmfal/loop.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "bmfal/delta.hpp"
#include "bmfal/io.hpp"

namespace bmfal {

Strategy strategy_from_string(const std::string& s) {
  if (s == "BMFAL_BC") return Strategy::kBmfalBc;
  if (s == "DMFAL_BC") return Strategy::kDmfalBc;
  if (s == "MFAL_BC") return Strategy::kMfalBc;
  if (s == "DMFAL_BC_RF") return Strategy::kDmfalBcRf;
  if (s == "MFAL_BC_RF") return Strategy::kMfalBcRf;
  if (s == "BATCH_FR_BC") return Strategy::kBatchFrBc;
  throw ContractError("unknown strategy '" + s + "'");
}

std::string strategy_to_string(Strategy s) {
  switch (s) {
    case Strategy::kBmfalBc: return "BMFAL_BC";
    case Strategy::kDmfalBc: return "DMFAL_BC";
    case Strategy::kMfalBc: return "MFAL_BC";
    case Strategy::kDmfalBcRf: return "DMFAL_BC_RF";
    case Strategy::kMfalBcRf: return "MFAL_BC_RF";
    case Strategy::kBatchFrBc: return "BATCH_FR_BC";
  }
  throw ContractError("unknown strategy enum value");
}

std::vector<Strategy> all_strategies() {
  return {Strategy::kBmfalBc,   Strategy::kDmfalBc,   Strategy::kMfalBc,
          Strategy::kDmfalBcRf, Strategy::kMfalBcRf,  Strategy::kBatchFrBc};
}

void ExperimentConfig::validate() const {
  ladder.validate();
  train.validate();
  optimizer.validate();
  if (budget <= 0) throw ContractError("ExperimentConfig: budget must be positive");
  if (num_batches < 0) throw ContractError("ExperimentConfig: num_batches must be nonnegative");
  if (static_cast<int>(initial_counts.size()) != ladder.num_fidelities())
    throw ContractError("ExperimentConfig: one initial count per fidelity required");
  for (int c : initial_counts)
    if (c < 0) throw ContractError("ExperimentConfig: initial counts must be nonnegative");
  if (mc_samples < 1) throw ContractError("ExperimentConfig: mc_samples must be positive");
  if (test_size < 1) throw ContractError("ExperimentConfig: test_size must be positive");
  if (inner_epochs < 0) throw ContractError("ExperimentConfig: inner_epochs must be nonnegative");
}

Dataset init_dataset(const SimulatorOracle& oracle, const std::vector<int>& counts_per_fidelity,
                     std::uint64_t seed) {
  if (static_cast<int>(counts_per_fidelity.size()) != oracle.num_fidelities())
    throw ContractError("init_dataset: one count per fidelity required");
  Dataset data;
  Rng rng(derive_seed(seed, 0x1d17));
  for (int m = 0; m < oracle.num_fidelities(); ++m) {
    for (int i = 0; i < counts_per_fidelity[m]; ++i) {
      Example e;
      e.x = oracle.domain().sample(rng);
      e.fidelity = m;
      auto res = oracle.query(e.x, m);
      e.y = std::move(res.y);
      e.cost = res.cost;
      data.add(std::move(e));
    }
  }
  return data;
}

double nrmse(const std::vector<Eigen::VectorXd>& predictions,
             const std::vector<Eigen::VectorXd>& truths) {
  if (predictions.size() != truths.size() || predictions.empty())
    throw ContractError("nrmse: prediction/truth count mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != truths[i].size()) throw ContractError("nrmse: shape mismatch");
    num += (predictions[i] - truths[i]).squaredNorm();
    den += truths[i].squaredNorm();
  }
  if (den == 0.0) throw std::domain_error("nrmse: ground truth is identically zero");
  return std::sqrt(num / den);
}

EvalSet make_eval_set(const SimulatorOracle& oracle, int size, std::uint64_t seed) {
  EvalSet eval;
  Rng rng(derive_seed(seed, 0x7e57));
  for (int i = 0; i < size; ++i) {
    Eigen::VectorXd x = oracle.domain().sample(rng);
    eval.truths.push_back(oracle.reference(x));
    eval.inputs.push_back(std::move(x));
  }
  return eval;
}

Eigen::VectorXd predict_on_eval_mesh(const MfModel& model, const FidelityLadder& ladder,
                                     const Eigen::VectorXd& x) {
  const int top = model.num_fidelities() - 1;
  const auto latents = model.forward_latents(model.mean_weights(), x);
  const Eigen::VectorXd mean = model.fidelity(top).projection * latents[top];
  return interpolate(mean, ladder.meshes[top], ladder.eval_mesh);
}

double eval_nrmse(const MfModel& model, const FidelityLadder& ladder, const EvalSet& eval) {
  std::vector<Eigen::VectorXd> preds;
  preds.reserve(eval.inputs.size());
  for (const auto& x : eval.inputs) preds.push_back(predict_on_eval_mesh(model, ladder, x));
  return nrmse(preds, eval.truths);
}

ModelConfig make_model_config(const ExperimentConfig& config, const SimulatorOracle& oracle) {
  ModelConfig mc;
  mc.num_fidelities = oracle.num_fidelities();
  mc.input_dim = oracle.input_dim();
  mc.output_dims = oracle.ladder().output_dims();
  if (static_cast<int>(config.model.latent_dims.size()) == mc.num_fidelities)
    mc.latent_dims = config.model.latent_dims;
  else if (config.model.latent_dims.size() == 1)
    mc.latent_dims.assign(mc.num_fidelities, config.model.latent_dims[0]);
  else
    throw ContractError("model.latent_dims must have one entry or one per fidelity");
  mc.hidden_width = config.model.hidden_width;
  mc.hidden_layers = config.model.hidden_layers;
  mc.cov_type = config.model.cov_type == "diag" ? CovType::kDiag : CovType::kFull;
  return mc;
}

CostModel make_cost_model(const ExperimentConfig& config) {
  return CostModel(config.ladder.lambdas, config.budget);
}

std::unique_ptr<SimulatorOracle> make_oracle(const ExperimentConfig& config) {
  SyntheticSpec spec;
  spec.input_dim = config.synthetic_input_dim;
  spec.discrepancy = config.synthetic_discrepancy;
  return make_oracle(config.problem, config.ladder, &spec);
}

namespace {

struct Acquired {
  std::vector<Example> batch;
  Rational spent;
};

Example query_example(const SimulatorOracle& oracle, const Eigen::VectorXd& x, int fidelity) {
  Example e;
  e.x = x;
  e.fidelity = fidelity;
  auto res = oracle.query(x, fidelity);
  e.y = std::move(res.y);
  e.cost = res.cost;
  return e;
}

std::vector<int> affordable_fidelities(const CostModel& cost, const Rational& spent) {
  std::vector<int> ms;
  for (int m = 0; m < cost.num_fidelities(); ++m)
    if (cost.affordable(m, spent)) ms.push_back(m);
  return ms;
}

// BMFAL_BC: whole batch from the weighted greedy planner, then one retrain.
Acquired acquire_bmfal(LoopState& state, const SimulatorOracle& oracle, const CostModel& cost,
                       const ExperimentConfig& cfg, int batch_index) {
  Acquired out;
  const McInputSet mc = McInputSet::draw(oracle.domain(), cfg.mc_samples,
                                         derive_seed(cfg.seed, 0xba7c, batch_index));
  OptimizerConfig oc = cfg.optimizer;
  oc.seed = derive_seed(cfg.seed, 0x0b17 + cfg.optimizer.seed, batch_index);
  const Plan plan = plan_batch(state.model, cost, oc, mc, PlanMode::kStandard);
  for (const auto& q : plan.queries) {
    out.batch.push_back(query_example(oracle, q.x, q.fidelity));
    out.spent += cost.lambdas[q.fidelity];
  }
  return out;
}

// BATCH_FR_BC: fully random fidelity and input until nothing is affordable.
Acquired acquire_batch_fr(LoopState& state, const SimulatorOracle& oracle, const CostModel& cost,
                          const ExperimentConfig& cfg, int batch_index) {
  (void)state;
  Acquired out;
  Rng rng(derive_seed(cfg.seed, 0xf7ee, batch_index));
  while (true) {
    const auto ms = affordable_fidelities(cost, out.spent);
    if (ms.empty()) break;
    const int m = ms[rng.below(ms.size())];
    const Eigen::VectorXd x = oracle.domain().sample(rng);
    out.batch.push_back(query_example(oracle, x, m));
    out.spent += cost.lambdas[m];
  }
  return out;
}

// Sequential strategies: one (query, retrain) per step inside the batch.
Acquired acquire_sequential(LoopState& state, const SimulatorOracle& oracle, const CostModel& cost,
                            const ExperimentConfig& cfg, int batch_index) {
  Acquired out;
  const int top = state.model.num_fidelities() - 1;
  Rng fid_rng(derive_seed(cfg.seed, 0xf1d0, batch_index));
  TrainConfig inner = cfg.train;
  inner.epochs = cfg.inner_epochs;
  inner.seed = derive_seed(cfg.seed, 0x7a21, cfg.train.seed);

  for (int step = 0;; ++step) {
    const auto ms = affordable_fidelities(cost, out.spent);
    if (ms.empty()) break;

    OptimizerConfig oc = cfg.optimizer;
    oc.seed = derive_seed(cfg.seed, 0x529d + cfg.optimizer.seed,
                          static_cast<std::uint64_t>(batch_index) * 4096 + step);

    int chosen = -1;
    Eigen::VectorXd chosen_x;
    try {
      if (cfg.strategy == Strategy::kDmfalBc || cfg.strategy == Strategy::kDmfalBcRf) {
        auto pair_mi = [&](int m, const Eigen::VectorXd& x) {
          return output_mi(state.model, {Query{x, m}}, Query{x, top});
        };
        if (cfg.strategy == Strategy::kDmfalBc) {
          double best = 0.0;
          for (int m : ms) {
            auto res = maximize([&](const Eigen::VectorXd& x) { return pair_mi(m, x); },
                                oracle.domain(), oc);
            const double score = res.value / cost.lambda(m);
            if (chosen < 0 || score > best) {
              chosen = m;
              chosen_x = std::move(res.x);
              best = score;
            }
          }
        } else {
          const int m = ms[fid_rng.below(ms.size())];
          auto res = maximize([&](const Eigen::VectorXd& x) { return pair_mi(m, x); },
                              oracle.domain(), oc);
          chosen = m;
          chosen_x = std::move(res.x);
        }
      } else {  // MFAL_BC and MFAL_BC_RF
        const McInputSet mc = McInputSet::draw(
            oracle.domain(), cfg.mc_samples,
            derive_seed(cfg.seed, 0x3c21, static_cast<std::uint64_t>(batch_index) * 4096 + step));
        IncrementalBatchScorer scorer(state.model, mc);
        if (cfg.strategy == Strategy::kMfalBc) {
          double best = 0.0;
          for (int m : ms) {
            auto res = maximize([&](const Eigen::VectorXd& x) { return scorer.gain(m, x); },
                                oracle.domain(), oc);
            const double score = res.value / cost.lambda(m);
            if (chosen < 0 || score > best) {
              chosen = m;
              chosen_x = std::move(res.x);
              best = score;
            }
          }
        } else {
          const int m = ms[fid_rng.below(ms.size())];
          auto res = maximize([&](const Eigen::VectorXd& x) { return scorer.gain(m, x); },
                              oracle.domain(), oc);
          chosen = m;
          chosen_x = std::move(res.x);
        }
      }
    } catch (const OptimizerError&) {
      break;  // no usable pick this step
    }
    if (chosen < 0) break;

    Example e = query_example(oracle, chosen_x, chosen);
    out.spent += cost.lambdas[chosen];
    out.batch.push_back(e);
    state.dataset.add(std::move(e));
    if (cfg.inner_epochs > 0) train(state.model, state.dataset, inner);
  }
  return out;
}

}  // namespace

RunRecord run_step(LoopState& state, const SimulatorOracle& oracle, const EvalSet& eval,
                   const ExperimentConfig& cfg, int batch_index) {
  const auto t0 = std::chrono::steady_clock::now();
  const CostModel cost = make_cost_model(cfg);

  Acquired acq;
  const bool sequential = cfg.strategy == Strategy::kDmfalBc || cfg.strategy == Strategy::kMfalBc ||
                          cfg.strategy == Strategy::kDmfalBcRf ||
                          cfg.strategy == Strategy::kMfalBcRf;
  if (cfg.strategy == Strategy::kBmfalBc) {
    acq = acquire_bmfal(state, oracle, cost, cfg, batch_index);
  } else if (cfg.strategy == Strategy::kBatchFrBc) {
    acq = acquire_batch_fr(state, oracle, cost, cfg, batch_index);
  } else {
    acq = acquire_sequential(state, oracle, cost, cfg, batch_index);
  }

  if (!(acq.spent <= cost.budget))
    throw NumericalError("run_step: batch cost exceeded the budget");  // planner contract

  if (!sequential && !acq.batch.empty()) {
    for (auto& e : acq.batch) state.dataset.add(e);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 0x7a21, cfg.train.seed);
    train(state.model, state.dataset, tc);
  }
  state.accumulated_cost += acq.spent;

  RunRecord rec;
  rec.batch_index = batch_index;
  rec.accumulated_cost = state.accumulated_cost;
  rec.batch_counts.assign(oracle.num_fidelities(), 0);
  for (const auto& e : acq.batch) rec.batch_counts[e.fidelity] += 1;
  rec.nrmse = eval_nrmse(state.model, cfg.ladder, eval);
  rec.strategy = cfg.strategy;
  rec.seed = cfg.seed;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::string records_to_csv(const std::vector<RunRecord>& records, int num_fidelities,
                           bool record_walltime) {
  std::ostringstream out;
  out << "strategy,seed,batch_index,accumulated_cost,nrmse,wall_seconds";
  for (int m = 1; m <= num_fidelities; ++m) out << ",n_fid_" << m;
  out << "\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : records) {
    out << strategy_to_string(r.strategy) << "," << r.seed << "," << r.batch_index << ","
        << fmt(r.accumulated_cost.to_double()) << "," << fmt(r.nrmse) << ","
        << fmt(record_walltime ? r.wall_seconds : 0.0);
    for (int c : r.batch_counts) out << "," << c;
    out << "\n";
  }
  return out.str();
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  auto oracle = make_oracle(cfg);

  LoopState state{
      MfModel(make_model_config(cfg, *oracle), oracle->domain(), derive_seed(cfg.seed, 0x30de1)),
      init_dataset(*oracle, cfg.initial_counts, derive_seed(cfg.seed, 0xda7a)), Rational(0)};

  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 0x7a21, cfg.train.seed);
  if (!state.dataset.empty()) train(state.model, state.dataset, tc);

  const EvalSet eval = make_eval_set(*oracle, cfg.test_size, cfg.test_seed);

  std::vector<RunRecord> records;
  RunRecord base;
  base.batch_index = 0;
  base.accumulated_cost = Rational(0);
  base.batch_counts.assign(oracle->num_fidelities(), 0);
  base.nrmse = eval_nrmse(state.model, cfg.ladder, eval);
  base.strategy = cfg.strategy;
  base.seed = cfg.seed;
  base.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  records.push_back(base);

  for (int b = 1; b <= cfg.num_batches; ++b)
    records.push_back(run_step(state, *oracle, eval, cfg, b));

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("run_experiment: cannot create output directory " + out_dir +
                                     ": " + ec.message());
    write_text_file(out_dir + "/results.csv",
                    records_to_csv(records, oracle->num_fidelities(), cfg.record_walltime));
    std::ostringstream jsonl;
    for (const auto& r : records) jsonl << record_to_json(r, cfg.record_walltime).dump() << "\n";
    write_text_file(out_dir + "/records.jsonl", jsonl.str());
    write_dataset_jsonl(state.dataset, out_dir + "/dataset.jsonl");
    save_model(state.model, out_dir + "/model.json");
    write_text_file(out_dir + "/config.json", config_to_json(cfg).dump(2) + "\n");
  }
  return records;
}

}  // namespace bmfal
