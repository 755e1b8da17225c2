#include "bmfal/simulators.hpp"

#include <cmath>
#include <map>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace bmfal {

void FidelityLadder::validate() const {
  if (meshes.empty()) throw ContractError("FidelityLadder: needs at least one fidelity");
  if (lambdas.size() != meshes.size())
    throw ContractError("FidelityLadder: one cost per fidelity required");
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    if (m > 0 && meshes[m].n <= meshes[m - 1].n)
      throw ContractError("FidelityLadder: mesh sizes must be strictly increasing");
    if (lambdas[m] <= 0 || (m > 0 && lambdas[m] < lambdas[m - 1]))
      throw ContractError("FidelityLadder: costs must be positive and nondecreasing");
  }
}

namespace {

constexpr double kBumpSigma = 0.1;
constexpr double kHeatAlpha = 0.01;
constexpr double kHeatT = 1.0;
constexpr double kHeatDt = 1e-2;

using SparseMat = Eigen::SparseMatrix<double>;

// 5-point negative Laplacian on interior nodes, scaled by 1/h^2.
SparseMat interior_laplacian(const MeshSpec& mesh) {
  const int n = mesh.n;
  const int ni = n - 2;
  const double inv_h2 = 1.0 / (mesh.spacing() * mesh.spacing());
  SparseMat a(ni * ni, ni * ni);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(5 * ni * ni));
  auto id = [ni](int i, int j) { return i * ni + j; };
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < ni; ++j) {
      trips.emplace_back(id(i, j), id(i, j), 4.0 * inv_h2);
      if (i > 0) trips.emplace_back(id(i, j), id(i - 1, j), -inv_h2);
      if (i < ni - 1) trips.emplace_back(id(i, j), id(i + 1, j), -inv_h2);
      if (j > 0) trips.emplace_back(id(i, j), id(i, j - 1), -inv_h2);
      if (j < ni - 1) trips.emplace_back(id(i, j), id(i, j + 1), -inv_h2);
    }
  }
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

Eigen::VectorXd interior_of(const Eigen::VectorXd& field, int n) {
  const int ni = n - 2;
  Eigen::VectorXd v(ni * ni);
  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < ni; ++j) v(i * ni + j) = field((i + 1) * n + (j + 1));
  return v;
}

Eigen::VectorXd embed_interior(const Eigen::VectorXd& interior, int n) {
  const int ni = n - 2;
  Eigen::VectorXd field = Eigen::VectorXd::Zero(n * n);
  for (int i = 0; i < ni; ++i)
    for (int j = 0; j < ni; ++j) field((i + 1) * n + (j + 1)) = interior(i * ni + j);
  return field;
}

Eigen::VectorXd gaussian_bump_field(const Eigen::VectorXd& center, const MeshSpec& mesh) {
  if (center.size() != 2) throw ContractError("simulators: bump center must be 2-dimensional");
  const int n = mesh.n;
  const double h = mesh.spacing();
  Eigen::VectorXd f(n * n);
  const double inv2s2 = 1.0 / (2.0 * kBumpSigma * kBumpSigma);
  for (int i = 0; i < n; ++i) {
    const double s1 = i * h;
    for (int j = 0; j < n; ++j) {
      const double s2 = j * h;
      const double d2 = (s1 - center(0)) * (s1 - center(0)) + (s2 - center(1)) * (s2 - center(1));
      f(i * n + j) = std::exp(-d2 * inv2s2);
    }
  }
  return f;
}

}  // namespace

Eigen::VectorXd solve_poisson_rhs(const Eigen::VectorXd& rhs, const MeshSpec& mesh) {
  const int n = mesh.n;
  if (rhs.size() != mesh.field_dim()) throw ContractError("solve_poisson: rhs size mismatch");
  const SparseMat a = interior_laplacian(mesh);
  const Eigen::VectorXd b = interior_of(rhs, n);

  Eigen::SimplicialLDLT<SparseMat> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalError("solve_poisson: factorization failed");
  const Eigen::VectorXd u = solver.solve(b);
  if (solver.info() != Eigen::Success) throw NumericalError("solve_poisson: solve failed");

  const double rnorm = (a * u - b).norm();
  if (rnorm > 1e-10 * std::max(b.norm(), 1e-300))
    throw NumericalError("solve_poisson: residual " + std::to_string(rnorm) + " exceeds tolerance");
  return embed_interior(u, n);
}

Eigen::VectorXd solve_poisson(const Eigen::VectorXd& x, const MeshSpec& mesh) {
  return solve_poisson_rhs(gaussian_bump_field(x, mesh), mesh);
}

Eigen::VectorXd solve_heat_init(const Eigen::VectorXd& initial, const MeshSpec& mesh, double alpha,
                                double t_final, double dt) {
  const int n = mesh.n;
  if (initial.size() != mesh.field_dim()) throw ContractError("solve_heat: initial field size mismatch");
  if (alpha < 0 || t_final < 0 || dt <= 0) throw ContractError("solve_heat: bad time parameters");

  Eigen::VectorXd u = interior_of(initial, n);
  const int steps = static_cast<int>(std::llround(t_final / dt));
  if (steps == 0 || alpha == 0.0) return embed_interior(u, n);

  SparseMat op = interior_laplacian(mesh);
  op *= alpha * dt;
  SparseMat eye(op.rows(), op.cols());
  eye.setIdentity();
  op = SparseMat(eye + op);

  Eigen::SimplicialLDLT<SparseMat> solver(op);
  if (solver.info() != Eigen::Success) throw NumericalError("solve_heat: factorization failed");
  for (int s = 0; s < steps; ++s) {
    u = solver.solve(u);
    if (solver.info() != Eigen::Success) throw NumericalError("solve_heat: solve failed");
  }
  return embed_interior(u, n);
}

Eigen::VectorXd solve_heat(const Eigen::VectorXd& x, const MeshSpec& mesh) {
  Eigen::VectorXd u0 = gaussian_bump_field(x, mesh);
  // conform to the Dirichlet boundary from the start
  const int n = mesh.n;
  for (int i = 0; i < n; ++i) {
    u0(i) = 0.0;
    u0((n - 1) * n + i) = 0.0;
    u0(i * n) = 0.0;
    u0(i * n + n - 1) = 0.0;
  }
  return solve_heat_init(u0, mesh, kHeatAlpha, kHeatT, kHeatDt);
}

Eigen::VectorXd interpolate(const Eigen::VectorXd& field, const MeshSpec& from, const MeshSpec& to) {
  if (field.size() != from.field_dim()) throw ContractError("interpolate: field size mismatch");
  const int ns = from.n;
  const int nt = to.n;
  Eigen::VectorXd out(nt * nt);
  for (int i = 0; i < nt; ++i) {
    // grid coordinate in source cells; exact at shared nodes of nested meshes
    const double gx = static_cast<double>(i) * (ns - 1.0) / (nt - 1.0);
    int i0 = std::min(static_cast<int>(gx), ns - 2);
    const double fx = gx - i0;
    for (int j = 0; j < nt; ++j) {
      const double gy = static_cast<double>(j) * (ns - 1.0) / (nt - 1.0);
      int j0 = std::min(static_cast<int>(gy), ns - 2);
      const double fy = gy - j0;
      const double v00 = field(i0 * ns + j0);
      const double v01 = field(i0 * ns + j0 + 1);
      const double v10 = field((i0 + 1) * ns + j0);
      const double v11 = field((i0 + 1) * ns + j0 + 1);
      out(i * nt + j) = (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11);
    }
  }
  return out;
}

// ---- synthetic oracle ----

namespace {

constexpr int kSynthTerms = 3;

double synth_coeff(const Eigen::VectorXd& x, int p, int q) {
  double w = 0.7 * (p - q);
  double v = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    w += (1.0 + 0.5 * p + 0.25 * q + 0.1 * (j + 1)) * x(j);
    v += (0.5 + 0.3 * q + 0.15 * (j + 1)) * x(j);
  }
  return (std::cos(w) + 0.3 * std::sin(v)) / (p * p + q * q);
}

}  // namespace

double synthetic_field_value(const Eigen::VectorXd& x, double s1, double s2, int fidelity,
                             int num_fidelities, double discrepancy) {
  const double level =
      num_fidelities > 1
          ? static_cast<double>(num_fidelities - 1 - fidelity) / (num_fidelities - 1)
          : 0.0;
  const double gamma = 0.6 * discrepancy * level;
  double u = 0.0;
  for (int p = 1; p <= kSynthTerms; ++p)
    for (int q = 1; q <= kSynthTerms; ++q)
      u += synth_coeff(x, p, q) * std::exp(-gamma * (p * p + q * q - 2.0)) *
           std::sin(p * M_PI * s1) * std::sin(q * M_PI * s2);
  double xsum = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) xsum += x(j);
  u += discrepancy * level * std::sin(M_PI * s1) * std::sin(M_PI * s2) * std::cos(xsum);
  return u;
}

namespace {

class SyntheticOracle final : public SimulatorOracle {
 public:
  explicit SyntheticOracle(SyntheticSpec spec)
      : spec_(std::move(spec)), domain_(DomainBox::unit(spec_.input_dim)) {
    spec_.ladder.validate();
    if (spec_.input_dim < 1) throw ContractError("SyntheticOracle: input_dim must be positive");
  }

  int input_dim() const override { return spec_.input_dim; }
  const DomainBox& domain() const override { return domain_; }
  const FidelityLadder& ladder() const override { return spec_.ladder; }

  QueryResult query(const Eigen::VectorXd& x, int fidelity) const override {
    check_fidelity(fidelity);
    return {sample(x, spec_.ladder.meshes[fidelity], fidelity), spec_.ladder.lambdas[fidelity]};
  }

  Eigen::VectorXd reference(const Eigen::VectorXd& x) const override {
    return sample(x, spec_.ladder.eval_mesh, num_fidelities() - 1);
  }

 private:
  void check_fidelity(int m) const {
    if (m < 0 || m >= num_fidelities()) throw ContractError("SyntheticOracle: fidelity out of range");
  }

  Eigen::VectorXd sample(const Eigen::VectorXd& x, const MeshSpec& mesh, int fidelity) const {
    if (x.size() != spec_.input_dim) throw ContractError("SyntheticOracle: input dimension mismatch");
    const int n = mesh.n;
    const double h = mesh.spacing();
    Eigen::VectorXd y(n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        y(i * n + j) =
            synthetic_field_value(x, i * h, j * h, fidelity, num_fidelities(), spec_.discrepancy);
    return y;
  }

  SyntheticSpec spec_;
  DomainBox domain_;
};

// Shared scaffolding for the PDE oracles: domain [0.1, 0.9]^2, cached sparse
// factorizations per mesh.
class PdeOracle : public SimulatorOracle {
 public:
  explicit PdeOracle(FidelityLadder ladder)
      : ladder_(std::move(ladder)), domain_(DomainBox::cube(2, 0.1, 0.9)) {
    ladder_.validate();
  }

  int input_dim() const override { return 2; }
  const DomainBox& domain() const override { return domain_; }
  const FidelityLadder& ladder() const override { return ladder_; }

  QueryResult query(const Eigen::VectorXd& x, int fidelity) const override {
    if (fidelity < 0 || fidelity >= num_fidelities())
      throw ContractError("PdeOracle: fidelity out of range");
    return {solve(x, ladder_.meshes[fidelity]), ladder_.lambdas[fidelity]};
  }

  Eigen::VectorXd reference(const Eigen::VectorXd& x) const override {
    return solve(x, ladder_.eval_mesh);
  }

 protected:
  virtual Eigen::VectorXd solve(const Eigen::VectorXd& x, const MeshSpec& mesh) const = 0;

 private:
  FidelityLadder ladder_;
  DomainBox domain_;
};

class PoissonOracle final : public PdeOracle {
 public:
  using PdeOracle::PdeOracle;

 protected:
  Eigen::VectorXd solve(const Eigen::VectorXd& x, const MeshSpec& mesh) const override {
    auto& entry = solvers_[mesh.n];
    if (!entry) {
      entry = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>();
      entry->compute(interior_laplacian(mesh));
      if (entry->info() != Eigen::Success) throw NumericalError("PoissonOracle: factorization failed");
    }
    const Eigen::VectorXd b = interior_of(gaussian_bump_field(x, mesh), mesh.n);
    const Eigen::VectorXd u = entry->solve(b);
    if (entry->info() != Eigen::Success) throw NumericalError("PoissonOracle: solve failed");
    return embed_interior(u, mesh.n);
  }

 private:
  mutable std::map<int, std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>>> solvers_;
};

class HeatOracle final : public PdeOracle {
 public:
  using PdeOracle::PdeOracle;

 protected:
  Eigen::VectorXd solve(const Eigen::VectorXd& x, const MeshSpec& mesh) const override {
    return solve_heat(x, mesh);
  }
};

}  // namespace

std::unique_ptr<SimulatorOracle> make_synthetic_oracle(const SyntheticSpec& spec) {
  return std::make_unique<SyntheticOracle>(spec);
}

std::unique_ptr<SimulatorOracle> make_poisson_oracle(const FidelityLadder& ladder) {
  return std::make_unique<PoissonOracle>(ladder);
}

std::unique_ptr<SimulatorOracle> make_heat_oracle(const FidelityLadder& ladder) {
  return std::make_unique<HeatOracle>(ladder);
}

std::unique_ptr<SimulatorOracle> make_oracle(const std::string& problem, const FidelityLadder& ladder,
                                             const SyntheticSpec* synthetic) {
  if (problem == "poisson") return make_poisson_oracle(ladder);
  if (problem == "heat") return make_heat_oracle(ladder);
  if (problem == "synthetic") {
    SyntheticSpec spec;
    if (synthetic) spec = *synthetic;
    spec.ladder = ladder;
    return make_synthetic_oracle(spec);
  }
  throw ContractError("make_oracle: unknown problem '" + problem + "'");
}

}  // namespace bmfal
