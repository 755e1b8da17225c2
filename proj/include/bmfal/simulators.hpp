#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmfal/domain.hpp"
#include "bmfal/errors.hpp"

namespace bmfal {

// Uniform square mesh on [0,1]^2 with n points per side (fields have length
// n^2, boundary nodes included).
struct MeshSpec {
  int n = 3;

  MeshSpec() = default;
  explicit MeshSpec(int points_per_side) : n(points_per_side) {
    if (n < 3) throw ContractError("MeshSpec: need at least 3 points per side");
  }
  double spacing() const { return 1.0 / (n - 1); }
  int field_dim() const { return n * n; }
};

// Per-fidelity meshes (strictly finer with fidelity), costs, and the denser
// reference mesh used for evaluation.
struct FidelityLadder {
  std::vector<MeshSpec> meshes;
  std::vector<double> lambdas;
  MeshSpec eval_mesh;

  void validate() const;
  int num_fidelities() const { return static_cast<int>(meshes.size()); }
  std::vector<int> output_dims() const {
    std::vector<int> d;
    for (const auto& m : meshes) d.push_back(m.field_dim());
    return d;
  }
};

// -Laplace(u) = f on the unit square, u = 0 on the boundary, 5-point stencil,
// direct sparse solve. `rhs` is sampled on the full mesh; boundary entries
// are ignored. Verifies the discrete residual to 1e-10 relative.
Eigen::VectorXd solve_poisson_rhs(const Eigen::VectorXd& rhs, const MeshSpec& mesh);

// Source parameterization: f is a Gaussian bump of width sigma=0.1 centered
// at x in [0.1, 0.9]^2.
Eigen::VectorXd solve_poisson(const Eigen::VectorXd& x, const MeshSpec& mesh);

// u_t = alpha Laplace(u), Dirichlet 0, implicit Euler from the given initial
// field (boundary entries forced to zero) to time t_final.
Eigen::VectorXd solve_heat_init(const Eigen::VectorXd& initial, const MeshSpec& mesh, double alpha,
                                double t_final, double dt);

// Initial condition: Gaussian bump (sigma=0.1) centered at x in [0.1,0.9]^2;
// alpha = 0.01, T = 1, dt = 1e-2.
Eigen::VectorXd solve_heat(const Eigen::VectorXd& x, const MeshSpec& mesh);

// Bilinear interpolation between meshes on the unit square. Exact for
// per-cell bilinear fields; values at coincident nodes of nested meshes are
// preserved exactly.
Eigen::VectorXd interpolate(const Eigen::VectorXd& field, const MeshSpec& from, const MeshSpec& to);

// A multi-fidelity queryable map f_m with per-fidelity cost tags.
class SimulatorOracle {
 public:
  virtual ~SimulatorOracle() = default;

  struct QueryResult {
    Eigen::VectorXd y;
    double cost = 0.0;
  };

  virtual int input_dim() const = 0;
  virtual const DomainBox& domain() const = 0;
  virtual const FidelityLadder& ladder() const = 0;
  // fidelity is 0-based; deterministic: equal (x, fidelity) give bit-equal y.
  virtual QueryResult query(const Eigen::VectorXd& x, int fidelity) const = 0;
  // Ground truth on the evaluation mesh.
  virtual Eigen::VectorXd reference(const Eigen::VectorXd& x) const = 0;

  int num_fidelities() const { return ladder().num_fidelities(); }
};

// Analytic multi-fidelity test oracle: the top fidelity samples a closed-form
// trigonometric field; lower fidelities see a smoothed version plus a
// low-frequency discrepancy, both scaled by `discrepancy` and shrinking to
// zero at the top fidelity.
struct SyntheticSpec {
  int input_dim = 2;
  FidelityLadder ladder;
  double discrepancy = 0.5;
};

std::unique_ptr<SimulatorOracle> make_synthetic_oracle(const SyntheticSpec& spec);
std::unique_ptr<SimulatorOracle> make_poisson_oracle(const FidelityLadder& ladder);
std::unique_ptr<SimulatorOracle> make_heat_oracle(const FidelityLadder& ladder);

// problem in {"poisson", "heat", "synthetic"}.
std::unique_ptr<SimulatorOracle> make_oracle(const std::string& problem, const FidelityLadder& ladder,
                                             const SyntheticSpec* synthetic = nullptr);

// Closed form sampled by the synthetic oracle at a given fidelity; the test
// suite evaluates it independently.
double synthetic_field_value(const Eigen::VectorXd& x, double s1, double s2, int fidelity,
                             int num_fidelities, double discrepancy);

}  // namespace bmfal
