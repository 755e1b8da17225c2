#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bmfal/gaussian.hpp"
#include "bmfal/model.hpp"

namespace bmfal {

// One (input, fidelity) location at which the surrogate may be queried.
struct Query {
  Eigen::VectorXd x;
  int fidelity = 0;  // 0-based
};

// Ordered set of queries: candidate batch members plus target-fidelity
// evaluation points.
using QuerySet = std::vector<Query>;

// Joint Gaussian approximation over stacked latents [h_{m_1}(x_1); ...],
// with the block layout needed to slice per-query marginals back out.
struct LatentJointBelief {
  GaussianBelief belief;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> dims;

  Eigen::Index blocks() const { return static_cast<Eigen::Index>(dims.size()); }
};

// Jacobian of h_m(x) with respect to the stacked [vec(W_1); ...; vec(W_M)],
// evaluated at the variational means. Columns for W_j with j > m are zero.
// Shape: k_m x P with P the total weight dimension.
Eigen::MatrixXd latent_jacobian(const MfModel& model, const Eigen::VectorXd& x, int fidelity);

// First-order (delta method) joint Gaussian over the latents of all queries:
// mean from the forward pass at the variational means, covariance
// J blkdiag(Sigma_1..Sigma_M) J^T with J stacking per-query Jacobians over
// the shared weight space.
LatentJointBelief joint_latent_belief(const MfModel& model, const QuerySet& queries);

// Mutual information between the noisy projected outputs of a batch of
// queries and the noisy projected output of a single target query, computed
// through the low-rank log-det path (nothing of output dimension is formed).
double output_mi(const MfModel& model, const QuerySet& batch, const Query& target);

// Output blocks (A_m, tau_m) for a set of queries, for entropy computations.
ProjectedOutputSpec projection_spec(const MfModel& model, const QuerySet& queries);

}  // namespace bmfal
