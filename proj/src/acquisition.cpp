#include "bmfal/acquisition.hpp"

#include <cmath>

namespace bmfal {

namespace {

// Lower Cholesky of an SPD matrix of the form I + (PSD); no jitter is needed
// because such matrices dominate the identity.
Eigen::MatrixXd chol_lower(Eigen::MatrixXd m) {
  const Eigen::Index bad = detail::cholesky_in_place(m);
  if (bad >= 0)
    throw NumericalError("acquisition: Cholesky failed at leading minor " + std::to_string(bad + 1));
  m.triangularView<Eigen::StrictlyUpper>().setZero();
  return m;
}

double logdet_from_chol(const Eigen::MatrixXd& l) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace

CostModel::CostModel(const std::vector<double>& lams, double b) {
  for (double l : lams) lambdas.push_back(Rational::from_double(l));
  budget = Rational::from_double(b);
  validate();
}

CostModel::CostModel(std::vector<Rational> lams, Rational b)
    : lambdas(std::move(lams)), budget(std::move(b)) {
  validate();
}

void CostModel::validate() const {
  if (lambdas.empty()) throw ContractError("CostModel: needs at least one fidelity");
  const Rational zero(0);
  for (std::size_t m = 0; m < lambdas.size(); ++m) {
    if (!(zero < lambdas[m])) throw ContractError("CostModel: costs must be positive");
    if (m > 0 && lambdas[m] < lambdas[m - 1])
      throw ContractError("CostModel: costs must be nondecreasing in fidelity");
  }
  if (!(zero < budget)) throw ContractError("CostModel: budget must be positive");
}

McInputSet McInputSet::draw(const DomainBox& domain, int count, std::uint64_t seed) {
  if (count < 1) throw ContractError("McInputSet: needs at least one sample");
  McInputSet set;
  set.seed = seed;
  Rng rng(derive_seed(seed, 0x3c5e7));
  for (int i = 0; i < count; ++i) set.inputs.push_back(domain.sample(rng));
  return set;
}

IncrementalBatchScorer::IncrementalBatchScorer(const MfModel& model, const McInputSet& mc)
    : model_(model), mc_(mc) {
  if (mc_.inputs.empty()) throw ContractError("IncrementalBatchScorer: empty MC input set");
  const ModelConfig& cfg = model.config();
  for (int m = 0; m < cfg.num_fidelities; ++m) {
    chols_.push_back(model.chol_factor(m));
    const auto& proj = model.fidelity(m).projection;
    gram_roots_.push_back(psd_sqrt((proj.transpose() * proj / model.noise_var(m)).eval()));
  }
  c_state_.resize(0, cfg.total_weight_dim());
  r_state_.resize(0, 0);

  const int top = cfg.num_fidelities - 1;
  for (const auto& x : mc_.inputs) {
    TargetCache t;
    t.rows = whitened_rows(top, x);
    Eigen::MatrixXd m0 = t.rows * t.rows.transpose();
    m0.diagonal().array() += 1.0;
    t.logdet_alone = logdet_from_chol(chol_lower(m0));
    t.x_solve.resize(0, t.rows.rows());
    t.d = m0;
    t.logdet_d = t.logdet_alone;
    targets_.push_back(std::move(t));
  }
}

Eigen::MatrixXd IncrementalBatchScorer::whitened_rows(int fidelity, const Eigen::VectorXd& x) const {
  const ModelConfig& cfg = model_.config();
  const Eigen::MatrixXd jac = latent_jacobian(model_, x, fidelity);
  Eigen::MatrixXd rows(cfg.latent_dims[fidelity], cfg.total_weight_dim());
  int poff = 0;
  for (int m = 0; m < cfg.num_fidelities; ++m) {
    const int pdim = cfg.weight_dim(m);
    rows.middleCols(poff, pdim) =
        jac.middleCols(poff, pdim) * chols_[m].triangularView<Eigen::Lower>();
    poff += pdim;
  }
  return gram_roots_[fidelity] * rows;
}

void IncrementalBatchScorer::evaluate(int fidelity, const Eigen::VectorXd& x,
                                      CandidateEval& ev) const {
  const ModelConfig& cfg = model_.config();
  if (fidelity < 0 || fidelity >= cfg.num_fidelities)
    throw ContractError("IncrementalBatchScorer: fidelity out of range");

  ev.rows = whitened_rows(fidelity, x);
  const Eigen::Index k = ev.rows.rows();

  // Extend the state Cholesky by the candidate block.
  Eigen::MatrixXd d_cand = ev.rows * ev.rows.transpose();
  d_cand.diagonal().array() += 1.0;
  if (c_state_.rows() > 0) {
    const Eigen::MatrixXd off = c_state_ * ev.rows.transpose();  // K x k
    ev.x_solve = r_state_.triangularView<Eigen::Lower>().solve(off);
    d_cand -= ev.x_solve.transpose() * ev.x_solve;
  } else {
    ev.x_solve.resize(0, k);
  }
  ev.r_cand = chol_lower(d_cand);
  ev.logdet_cand = logdet_from_chol(ev.r_cand);

  // Extend each cached target block past the candidate; the per-target gain
  // is half the log-det drop of the target's Schur complement.
  double gain_sum = 0.0;
  ev.x2.clear();
  ev.d_next.clear();
  ev.logdet_d_next.clear();
  for (const auto& t : targets_) {
    Eigen::MatrixXd cross = ev.rows * t.rows.transpose();  // k x k_M
    if (ev.x_solve.rows() > 0) cross -= ev.x_solve.transpose() * t.x_solve;
    const Eigen::MatrixXd x2 = ev.r_cand.triangularView<Eigen::Lower>().solve(cross);
    Eigen::MatrixXd d_next = t.d - x2.transpose() * x2;
    const double ld = logdet_from_chol(chol_lower(d_next));
    gain_sum += 0.5 * (t.logdet_d - ld);
    ev.x2.push_back(x2);
    ev.d_next.push_back(std::move(d_next));
    ev.logdet_d_next.push_back(ld);
  }
  ev.mean_gain = gain_sum / static_cast<double>(targets_.size());
}

double IncrementalBatchScorer::gain(int fidelity, const Eigen::VectorXd& x) const {
  CandidateEval ev;
  evaluate(fidelity, x, ev);
  return ev.mean_gain;
}

void IncrementalBatchScorer::commit(int fidelity, const Eigen::VectorXd& x) {
  CandidateEval ev;
  evaluate(fidelity, x, ev);

  const Eigen::Index k_old = c_state_.rows();
  const Eigen::Index k = ev.rows.rows();
  Eigen::MatrixXd c_new(k_old + k, c_state_.cols());
  c_new.topRows(k_old) = c_state_;
  c_new.bottomRows(k) = ev.rows;
  c_state_ = std::move(c_new);

  Eigen::MatrixXd r_new = Eigen::MatrixXd::Zero(k_old + k, k_old + k);
  r_new.topLeftCorner(k_old, k_old) = r_state_;
  r_new.bottomLeftCorner(k, k_old) = ev.x_solve.transpose();
  r_new.bottomRightCorner(k, k) = ev.r_cand;
  r_state_ = std::move(r_new);

  for (std::size_t l = 0; l < targets_.size(); ++l) {
    TargetCache& t = targets_[l];
    Eigen::MatrixXd x_new(t.x_solve.rows() + k, t.x_solve.cols());
    x_new.topRows(t.x_solve.rows()) = t.x_solve;
    x_new.bottomRows(k) = ev.x2[l];
    t.x_solve = std::move(x_new);
    t.d = ev.d_next[l];
    t.logdet_d = ev.logdet_d_next[l];
  }

  state_.push_back(Query{x, fidelity});
  state_value_ += ev.mean_gain;
}

double acq_incremental_weighted(IncrementalBatchScorer& scorer, int fidelity,
                                const Eigen::VectorXd& x, const CostModel& cost,
                                const Rational& spent) {
  if (!cost.affordable(fidelity, spent))
    throw BudgetError("acq_incremental_weighted: fidelity " + std::to_string(fidelity + 1) +
                      " exceeds the remaining budget");
  return scorer.gain(fidelity, x) / cost.lambda(fidelity);
}

double acq_incremental_weighted(const MfModel& model, const QuerySet& state_queries,
                                const Rational& state_cost, int fidelity, const Eigen::VectorXd& x,
                                const McInputSet& mc, const CostModel& cost) {
  IncrementalBatchScorer scorer(model, mc);
  for (const auto& q : state_queries) scorer.commit(q.fidelity, q.x);
  return acq_incremental_weighted(scorer, fidelity, x, cost, state_cost);
}

double acq_dmfal(const MfModel& model, int fidelity, const Eigen::VectorXd& x,
                 const CostModel& cost) {
  if (fidelity < 0 || fidelity >= model.num_fidelities())
    throw ContractError("acq_dmfal: fidelity out of range");
  const int top = model.num_fidelities() - 1;
  const double mi = output_mi(model, {Query{x, fidelity}}, Query{x, top});
  return mi / cost.lambda(fidelity);
}

double acq_single_expected(const MfModel& model, int fidelity, const Eigen::VectorXd& x,
                           const McInputSet& mc) {
  IncrementalBatchScorer scorer(model, mc);
  return clamp_mi(scorer.gain(fidelity, x));
}

double acq_batch(const MfModel& model, const QuerySet& batch, const McInputSet& mc) {
  if (batch.empty()) throw ContractError("acq_batch: batch must be nonempty");
  IncrementalBatchScorer scorer(model, mc);
  for (const auto& q : batch) scorer.commit(q.fidelity, q.x);
  return clamp_mi(scorer.state_value());
}

}  // namespace bmfal
