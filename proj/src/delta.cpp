#include "bmfal/delta.hpp"

#include "bmfal/tape.hpp"

namespace bmfal {

namespace {

// Forward tape with W_m leaves at the variational means; feature parameters
// enter as constants since only the weight Jacobian is needed.
struct LatentTape {
  Tape tape;
  std::vector<int> w_leaves;
  std::vector<int> h_nodes;
};

void build_latent_tape(const MfModel& model, const Eigen::VectorXd& x, LatentTape& lt) {
  const ModelConfig& mc = model.config();
  if (x.size() != mc.input_dim) throw ContractError("latent_jacobian: input dimension mismatch");
  const auto means = model.mean_weights();
  const int x_node = lt.tape.constant(x);
  for (int m = 0; m < mc.num_fidelities; ++m) {
    lt.w_leaves.push_back(lt.tape.leaf(means[m]));
    int z = (m == 0) ? x_node : lt.tape.vconcat(x_node, lt.h_nodes[m - 1]);
    const FidelityParams& p = model.fidelity(m);
    for (int l = 0; l < mc.hidden_layers; ++l) {
      z = lt.tape.add_colvec(lt.tape.matmul(lt.tape.constant(p.layer_w[l]), z),
                             lt.tape.constant(p.layer_b[l]));
      if (mc.activation == Activation::kTanh) z = lt.tape.tanh(z);
    }
    lt.h_nodes.push_back(lt.tape.matmul(lt.w_leaves[m], z));
  }
}

}  // namespace

Eigen::MatrixXd latent_jacobian(const MfModel& model, const Eigen::VectorXd& x, int fidelity) {
  const ModelConfig& mc = model.config();
  if (fidelity < 0 || fidelity >= mc.num_fidelities)
    throw ContractError("latent_jacobian: fidelity out of range");

  LatentTape lt;
  build_latent_tape(model, x, lt);

  const int k = mc.latent_dims[fidelity];
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(k, mc.total_weight_dim());
  for (int i = 0; i < k; ++i) {
    Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(k, 1);
    seed(i, 0) = 1.0;
    lt.tape.backward_seed(lt.h_nodes[fidelity], seed);
    int offset = 0;
    for (int m = 0; m < mc.num_fidelities; ++m) {
      const int pdim = mc.weight_dim(m);
      const Eigen::MatrixXd& adj = lt.tape.adjoint(lt.w_leaves[m]);
      if (adj.size() != 0) {
        // column-major vec layout, matching unvec in the model
        jac.block(i, offset, 1, pdim) =
            Eigen::Map<const Eigen::MatrixXd>(adj.data(), 1, pdim);
      }
      offset += pdim;
    }
  }
  return jac;
}

LatentJointBelief joint_latent_belief(const MfModel& model, const QuerySet& queries) {
  if (queries.empty()) throw ContractError("joint_latent_belief: query set must be nonempty");
  const ModelConfig& mc = model.config();
  const int p_total = mc.total_weight_dim();

  // Per-fidelity Cholesky factors of the weight covariances.
  std::vector<Eigen::MatrixXd> chols(mc.num_fidelities);
  for (int m = 0; m < mc.num_fidelities; ++m) chols[m] = model.chol_factor(m);

  LatentJointBelief out;
  Eigen::Index total_k = 0;
  for (const auto& q : queries) {
    if (q.fidelity < 0 || q.fidelity >= mc.num_fidelities)
      throw ContractError("joint_latent_belief: fidelity out of range");
    out.offsets.push_back(total_k);
    out.dims.push_back(mc.latent_dims[q.fidelity]);
    total_k += mc.latent_dims[q.fidelity];
  }

  const auto means = model.mean_weights();
  Eigen::VectorXd mean(total_k);
  Eigen::MatrixXd b_all(total_k, p_total);  // rows: J_q blkdiag(L)
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    const auto latents = model.forward_latents(means, q.x);
    mean.segment(out.offsets[qi], out.dims[qi]) = latents[q.fidelity];

    const Eigen::MatrixXd jac = latent_jacobian(model, q.x, q.fidelity);
    int poff = 0;
    for (int m = 0; m < mc.num_fidelities; ++m) {
      const int pdim = mc.weight_dim(m);
      b_all.block(out.offsets[qi], poff, out.dims[qi], pdim) =
          jac.middleCols(poff, pdim) * chols[m].triangularView<Eigen::Lower>();
      poff += pdim;
    }
  }

  Eigen::MatrixXd cov = b_all * b_all.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  out.belief = GaussianBelief(std::move(mean), std::move(cov));
  return out;
}

ProjectedOutputSpec projection_spec(const MfModel& model, const QuerySet& queries) {
  ProjectedOutputSpec spec;
  for (const auto& q : queries)
    spec.blocks.push_back({model.fidelity(q.fidelity).projection, model.noise_var(q.fidelity)});
  return spec;
}

double output_mi(const MfModel& model, const QuerySet& batch, const Query& target) {
  if (batch.empty()) throw ContractError("output_mi: batch must be nonempty");

  QuerySet all = batch;
  all.push_back(target);
  const LatentJointBelief joint = joint_latent_belief(model, all);

  const Eigen::Index k_batch = joint.offsets.back();
  const Eigen::Index k_target = joint.dims.back();

  const ProjectedOutputSpec spec_all = projection_spec(model, all);
  ProjectedOutputSpec spec_batch;
  spec_batch.blocks.assign(spec_all.blocks.begin(), spec_all.blocks.end() - 1);
  ProjectedOutputSpec spec_target;
  spec_target.blocks.push_back(spec_all.blocks.back());

  const auto& cov = joint.belief.cov;
  const double x_batch = projected_excess_logdet(cov.topLeftCorner(k_batch, k_batch), spec_batch);
  const double x_target =
      projected_excess_logdet(cov.bottomRightCorner(k_target, k_target), spec_target);
  const double x_all = projected_excess_logdet(cov, spec_all);
  // Noise constants are identical on both sides and cancel exactly.
  return clamp_mi(0.5 * (x_batch + x_target - x_all));
}

Prediction predict(const MfModel& model, const Eigen::VectorXd& x, int fidelity) {
  const ModelConfig& mc = model.config();
  if (fidelity < 0 || fidelity >= mc.num_fidelities)
    throw ContractError("predict: fidelity out of range");
  if (x.size() != mc.input_dim) throw ContractError("predict: input dimension mismatch");

  const auto latents = model.forward_latents(model.mean_weights(), x);
  Prediction pred;
  pred.mean = model.fidelity(fidelity).projection * latents[fidelity];
  pred.latent = joint_latent_belief(model, {Query{x, fidelity}}).belief;
  return pred;
}

}  // namespace bmfal
