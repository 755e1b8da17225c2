#pragma once

#include <Eigen/Dense>

#include "bmfal/errors.hpp"
#include "bmfal/rng.hpp"

namespace bmfal {

// Axis-aligned box domain with strict componentwise ordering.
struct DomainBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  DomainBox() = default;
  DomainBox(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size()) throw ContractError("DomainBox: dimension mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower(i) < upper(i))) throw ContractError("DomainBox: lower must be < upper componentwise");
  }

  static DomainBox unit(Eigen::Index dim) {
    return DomainBox(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));
  }
  static DomainBox cube(Eigen::Index dim, double lo, double hi) {
    return DomainBox(Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi));
  }

  Eigen::Index dim() const { return lower.size(); }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x(i) < lower(i) - tol || x(i) > upper(i) + tol) return false;
    return true;
  }

  Eigen::VectorXd clip(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }

  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }

  Eigen::VectorXd sample(Rng& rng) const {
    Eigen::VectorXd x(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) x(i) = rng.uniform(lower(i), upper(i));
    return x;
  }
};

}  // namespace bmfal
