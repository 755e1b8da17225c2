#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmfal/errors.hpp"

namespace bmfal {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
inline constexpr double kLog2PiE = 2.8378770664093454836;  // log(2*pi*e)

// Clamp policy for mutual information: roundoff in (-kMiClampTol, 0) is
// clamped to zero; anything more negative signals a real bug.
inline constexpr double kMiClampTol = 1e-8;

namespace detail {

// In-place lower Cholesky. Returns -1 on success, else the index of the
// first nonpositive pivot (the failing leading minor is of order index+1).
inline Eigen::Index cholesky_in_place(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    if (j > 0) d -= a.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return j;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      if (j > 0) s -= a.row(i).head(j).dot(a.row(j).head(j));
      a(i, j) = s / ljj;
    }
  }
  return -1;
}

}  // namespace detail

// log det of a symmetric positive definite matrix via Cholesky, with the
// jitter ladder: on failure add eps*I with eps = 1e-10 * trace/n, escalate
// x10 up to 1e-4 * trace/n, then give up naming the offending leading minor.
template <class Derived>
double cholesky_logdet(const Eigen::MatrixBase<Derived>& cov_expr) {
  Eigen::MatrixXd cov = cov_expr;
  if (cov.rows() != cov.cols()) throw ContractError("cholesky_logdet: matrix must be square");
  const Eigen::Index n = cov.rows();
  if (n == 0) return 0.0;
  cov = 0.5 * (cov + cov.transpose()).eval();
  const double base = cov.trace() / static_cast<double>(n);

  Eigen::Index bad = -1;
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd work = cov;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    bad = detail::cholesky_in_place(work);
    if (bad < 0) {
      double logdet = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(work(i, i));
      return 2.0 * logdet;
    }
    const double next = (jitter == 0.0) ? 1e-10 * base : jitter * 10.0;
    if (!(next > 0.0) || next > 1e-4 * base) break;
    jitter = next;
  }
  throw NumericalError("cholesky_logdet: leading minor of order " + std::to_string(bad + 1) +
                       " is not positive definite (jitter ladder exhausted)");
}

// Symmetric PSD square root of a small matrix; negative eigenvalues from
// roundoff are clamped to zero.
template <class Derived>
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixBase<Derived>& m_expr) {
  Eigen::MatrixXd m = m_expr;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Finite-dimensional Gaussian: the currency of all entropy and mutual
// information computation. Covariance must be symmetric to 1e-10 relative.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianBelief() = default;
  GaussianBelief(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
      : mean(std::move(mu)), cov(std::move(sigma)) {
    if (cov.rows() != cov.cols()) throw ContractError("GaussianBelief: covariance must be square");
    if (mean.size() != cov.rows()) throw ContractError("GaussianBelief: mean/covariance size mismatch");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw ContractError("GaussianBelief: covariance is not symmetric to 1e-10 relative tolerance");
  }

  Eigen::Index dim() const { return mean.size(); }
};

// Differential entropy in nats: 0.5 * (n log(2 pi e) + log det cov).
inline double entropy(const GaussianBelief& belief) {
  return 0.5 * (static_cast<double>(belief.dim()) * kLog2PiE + cholesky_logdet(belief.cov));
}

// log det(tau*I_d + A Sigma A^T) computed on the k-dimensional side:
// d log tau + log det(I_k + Sigma A^T A / tau). Never touches a d x d matrix.
template <class DerivedA, class DerivedS>
double logdet_lowrank(double noise_var, const Eigen::MatrixBase<DerivedA>& projection,
                      const Eigen::MatrixBase<DerivedS>& latent_cov) {
  if (noise_var <= 0.0) throw std::domain_error("logdet_lowrank: noise variance must be positive");
  const Eigen::Index d = projection.rows();
  const Eigen::Index k = projection.cols();
  if (latent_cov.rows() != k || latent_cov.cols() != k)
    throw ContractError("logdet_lowrank: latent covariance must be k x k");
  const Eigen::MatrixXd gram = projection.transpose() * projection / noise_var;  // k x k
  const Eigen::MatrixXd root = psd_sqrt(gram);
  Eigen::MatrixXd m = root * latent_cov * root;
  m.diagonal().array() += 1.0;
  return static_cast<double>(d) * std::log(noise_var) + cholesky_logdet(m);
}

// One output block y_j = A_j h_j + noise, noise ~ N(0, tau_j I).
struct ProjectedBlock {
  Eigen::MatrixXd projection;  // d_j x k_j
  double noise_var = 1.0;      // tau_j > 0
};

// Block structure of the projected observation space: the j-th latent block
// (dimension k_j) maps to a d_j-dimensional output with isotropic noise.
struct ProjectedOutputSpec {
  std::vector<ProjectedBlock> blocks;

  void validate() const {
    for (const auto& b : blocks) {
      if (b.noise_var <= 0.0) throw ContractError("ProjectedOutputSpec: noise_var must be positive");
      if (b.projection.size() == 0) throw ContractError("ProjectedOutputSpec: empty projection block");
    }
  }
  Eigen::Index latent_dim() const {
    Eigen::Index k = 0;
    for (const auto& b : blocks) k += b.projection.cols();
    return k;
  }
  Eigen::Index output_dim() const {
    Eigen::Index d = 0;
    for (const auto& b : blocks) d += b.projection.rows();
    return d;
  }
};

// log det(I_K + G^{1/2} Sigma G^{1/2}) with G = blkdiag(A_j^T A_j / tau_j):
// the "excess" over the pure-noise log det. Entropy differences of projected
// Gaussians reduce to differences of this quantity, with the noise constants
// cancelling exactly.
template <class Derived>
double projected_excess_logdet(const Eigen::MatrixBase<Derived>& latent_cov_expr,
                               const ProjectedOutputSpec& spec) {
  spec.validate();
  Eigen::MatrixXd sigma = latent_cov_expr;
  const Eigen::Index total_k = spec.latent_dim();
  if (sigma.rows() != total_k || sigma.cols() != total_k)
    throw ContractError("projected_excess_logdet: latent dimension mismatch");

  std::vector<Eigen::MatrixXd> roots;
  roots.reserve(spec.blocks.size());
  for (const auto& b : spec.blocks)
    roots.push_back(psd_sqrt((b.projection.transpose() * b.projection / b.noise_var).eval()));

  Eigen::MatrixXd m(total_k, total_k);
  Eigen::Index roff = 0;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const Eigen::Index ki = roots[i].rows();
    Eigen::Index coff = 0;
    for (std::size_t j = 0; j < spec.blocks.size(); ++j) {
      const Eigen::Index kj = roots[j].rows();
      m.block(roff, coff, ki, kj) = roots[i] * sigma.block(roff, coff, ki, kj) * roots[j];
      coff += kj;
    }
    roff += ki;
  }
  m.diagonal().array() += 1.0;
  return cholesky_logdet(m);
}

// Entropy of N(mean, blkdiag(A_j) Sigma blkdiag(A_j)^T + blkdiag(tau_j I)),
// computed without forming anything of output dimension.
inline double projected_joint_entropy(const GaussianBelief& latent_joint,
                                      const ProjectedOutputSpec& spec) {
  double constant = 0.0;
  for (const auto& b : spec.blocks)
    constant += static_cast<double>(b.projection.rows()) * (kLog2PiE + std::log(b.noise_var));
  return 0.5 * (constant + projected_excess_logdet(latent_joint.cov, spec));
}

// Applies the clamp policy to a raw mutual information value.
inline double clamp_mi(double mi) {
  if (mi >= 0.0) return mi;
  if (mi > -kMiClampTol) return 0.0;
  throw NumericalError("mutual information is materially negative (" + std::to_string(mi) + " nats)");
}

// I(a, b) = H(a) + H(b) - H(a, b) for a partition of the joint belief into
// blocks a and b. The 2*pi*e constants cancel, so only log dets remain.
inline double mutual_information(const GaussianBelief& joint, const std::vector<Eigen::Index>& a,
                                 const std::vector<Eigen::Index>& b) {
  const Eigen::Index n = joint.dim();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  auto mark = [&](const std::vector<Eigen::Index>& idx) {
    for (Eigen::Index i : idx) {
      if (i < 0 || i >= n || seen[static_cast<std::size_t>(i)])
        throw ContractError("mutual_information: blocks must partition the indices exactly once");
      seen[static_cast<std::size_t>(i)] = 1;
    }
  };
  mark(a);
  mark(b);
  if (static_cast<Eigen::Index>(a.size() + b.size()) != n)
    throw ContractError("mutual_information: partition does not cover all indices");
  if (a.empty() || b.empty()) return 0.0;

  auto submatrix = [&](const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd s(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) s(i, j) = joint.cov(idx[i], idx[j]);
    return s;
  };
  const double ld_a = cholesky_logdet(submatrix(a));
  const double ld_b = cholesky_logdet(submatrix(b));
  const double ld_ab = cholesky_logdet(joint.cov);
  return clamp_mi(0.5 * (ld_a + ld_b - ld_ab));
}

}  // namespace bmfal
