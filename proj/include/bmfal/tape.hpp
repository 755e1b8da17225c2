#pragma once

#include <vector>

#include <Eigen/Dense>

#include "bmfal/errors.hpp"

namespace bmfal {

// Minimal matrix-valued reverse-mode tape. Values are computed eagerly as
// the expression is built; backward() accumulates adjoints in one reverse
// sweep. Scalars are 1x1 matrices. The op set is exactly what the
// multi-fidelity network, its Gaussian likelihood, and the KL terms need.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kConstant,
    kMatMul,
    kAdd,
    kSub,
    kScale,
    kMul,
    kExp,
    kLog,
    kTanh,
    kSoftplus,
    kVConcat,
    kReshape,
    kGatherCols,
    kAddColVec,
    kSumSquares,
    kSum,
    kDiagVec,
    kLowerSoftplusDiag,
  };

  int leaf(const Eigen::MatrixXd& v) { return push(Op::kLeaf, -1, -1, v); }
  int constant(const Eigen::MatrixXd& v) { return push(Op::kConstant, -1, -1, v); }

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double c);
  int mul(int a, int b);  // elementwise
  int exp(int a);
  int log(int a);
  int tanh(int a);
  int softplus(int a);
  int vconcat(int a, int b);
  int reshape(int a, Eigen::Index rows, Eigen::Index cols);
  int gather_cols(int a, std::vector<int> cols);
  int add_colvec(int m, int v);   // broadcast a column vector across columns
  int sum_squares(int a);         // -> 1x1
  int sum(int a);                 // -> 1x1
  int diag_vec(int a);            // diagonal of a square matrix as a column
  int lower_softplus_diag(int a); // lower triangle of a, softplus on diagonal

  const Eigen::MatrixXd& value(int id) const { return nodes_[id].val; }
  const Eigen::MatrixXd& adjoint(int id) const { return nodes_[id].adj; }

  // Reverse sweep from a 1x1 root, seeding 1.
  void backward(int root);
  // Reverse sweep with an arbitrary seed on an arbitrary node.
  void backward_seed(int node, const Eigen::MatrixXd& seed);
  void clear_adjoints();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c = 0.0;
    std::vector<int> idx;
    Eigen::MatrixXd val;
    Eigen::MatrixXd adj;
  };

  int push(Op op, int a, int b, Eigen::MatrixXd val, double c = 0.0, std::vector<int> idx = {});
  void sweep();

  std::vector<Node> nodes_;
};

inline double softplus_value(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace bmfal
