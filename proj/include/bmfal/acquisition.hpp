#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bmfal/delta.hpp"
#include "bmfal/model.hpp"
#include "bmfal/rational.hpp"

namespace bmfal {

// Per-fidelity query costs (nondecreasing) and the batch budget. Costs are
// kept as exact rationals so feasibility checks never hinge on roundoff;
// score arithmetic uses the double views.
struct CostModel {
  std::vector<Rational> lambdas;
  Rational budget;

  CostModel() = default;
  CostModel(const std::vector<double>& lams, double b);
  CostModel(std::vector<Rational> lams, Rational b);

  int num_fidelities() const { return static_cast<int>(lambdas.size()); }
  double lambda(int m) const { return lambdas[m].to_double(); }
  bool affordable(int m, const Rational& spent) const { return lambdas[m] <= budget - spent; }

  void validate() const;
};

// Monte-Carlo integration points x'_1..x'_A, drawn uniformly over the domain
// box once per planning round and held fixed within it.
struct McInputSet {
  std::vector<Eigen::VectorXd> inputs;
  std::uint64_t seed = 0;

  static McInputSet draw(const DomainBox& domain, int count, std::uint64_t seed);
  int count() const { return static_cast<int>(inputs.size()); }
};

// Per-pair score: I(y_m(x), y_M(x) | D) / lambda_m. For m = M both reads of
// the shared latent carry independent observation noise, keeping the value
// finite.
double acq_dmfal(const MfModel& model, int fidelity, const Eigen::VectorXd& x,
                 const CostModel& cost);

// Expectation-based single score: mean over the MC inputs of
// I(y_m(x), y_M(x'_l) | D). Unweighted; callers divide by lambda_m where the
// strategy calls for it.
double acq_single_expected(const MfModel& model, int fidelity, const Eigen::VectorXd& x,
                           const McInputSet& mc);

// Batch score: (1/A) sum_l I({y_{m_j}(x_j)}, y_M(x'_l) | D).
double acq_batch(const MfModel& model, const QuerySet& batch, const McInputSet& mc);

// Incremental evaluation state for the weighted greedy planner: caches the
// whitened projections and Cholesky factors of the committed batch so each
// candidate costs one block extension instead of a rebuild.
class IncrementalBatchScorer {
 public:
  IncrementalBatchScorer(const MfModel& model, const McInputSet& mc);

  // Mean MI increment (unweighted, in nats) of adding (x, m) to the state.
  double gain(int fidelity, const Eigen::VectorXd& x) const;
  // Adds the candidate to the committed state.
  void commit(int fidelity, const Eigen::VectorXd& x);

  const QuerySet& state() const { return state_; }
  // Current batch objective: mean over MC targets of I(state, target).
  double state_value() const { return state_value_; }
  const MfModel& model() const { return model_; }
  const McInputSet& mc() const { return mc_; }

 private:
  struct CandidateEval {
    Eigen::MatrixXd rows;     // whitened rows of the candidate (k x P)
    Eigen::MatrixXd x_solve;  // R_S^{-1} C_S rows^T (K x k)
    Eigen::MatrixXd r_cand;   // Cholesky of the candidate Schur block
    double logdet_cand = 0.0;
    double mean_gain = 0.0;
    std::vector<Eigen::MatrixXd> x2;       // per-target extension solves
    std::vector<Eigen::MatrixXd> d_next;   // per-target Schur complements
    std::vector<double> logdet_d_next;
  };

  Eigen::MatrixXd whitened_rows(int fidelity, const Eigen::VectorXd& x) const;
  void evaluate(int fidelity, const Eigen::VectorXd& x, CandidateEval& ev) const;

  const MfModel& model_;
  McInputSet mc_;

  std::vector<Eigen::MatrixXd> chols_;       // L_m
  std::vector<Eigen::MatrixXd> gram_roots_;  // (A_m^T A_m / tau_m)^{1/2}

  QuerySet state_;
  Eigen::MatrixXd c_state_;  // K x P whitened rows of the state
  Eigen::MatrixXd r_state_;  // lower Cholesky of I + C C^T
  double state_value_ = 0.0;

  struct TargetCache {
    Eigen::MatrixXd rows;       // whitened rows (k_M x P)
    double logdet_alone = 0.0;  // log det of its own 1-block matrix
    Eigen::MatrixXd x_solve;    // R_S^{-1} C_S rows^T
    Eigen::MatrixXd d;          // Schur complement of the target on [S, t]
    double logdet_d = 0.0;
  };
  std::vector<TargetCache> targets_;
};

// Weighted incremental score of Algorithm-style greedy steps:
//   [mean_l I(Y_k u {y_m(x)}, t_l) - mean_l I(Y_k, t_l)] / lambda_m,
// where Y_k is the scorer's committed state. Throws BudgetError when
// lambda_m exceeds the remaining budget.
double acq_incremental_weighted(IncrementalBatchScorer& scorer, int fidelity,
                                const Eigen::VectorXd& x, const CostModel& cost,
                                const Rational& spent);

// Convenience overload that rebuilds the state from an explicit query set.
double acq_incremental_weighted(const MfModel& model, const QuerySet& state_queries,
                                const Rational& state_cost, int fidelity, const Eigen::VectorXd& x,
                                const McInputSet& mc, const CostModel& cost);

}  // namespace bmfal
