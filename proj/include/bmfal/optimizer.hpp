#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "bmfal/domain.hpp"
#include "bmfal/errors.hpp"

namespace bmfal {

struct OptimizerConfig {
  int restarts = 10;
  int max_iters = 100;
  double grad_step = 1e-5;  // relative central-difference step
  double tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (restarts < 1 || max_iters < 1 || grad_step <= 0 || tol <= 0)
      throw ContractError("OptimizerConfig: all fields must be positive");
  }
};

struct MaximizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int restarts_used = 0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Multi-start quasi-Newton maximization over a box: limited-memory BFGS
// directions, central-difference gradients (probes clipped into the box),
// and projected backtracking line search. The first start is the box
// center; the remaining starts draw from nested per-restart seed streams,
// so increasing `restarts` never lowers the result. Throws OptimizerError
// when more than half of all objective probes are non-finite or no start
// yields a finite value.
MaximizeResult maximize(const Objective& objective, const DomainBox& domain,
                        const OptimizerConfig& config);

}  // namespace bmfal
