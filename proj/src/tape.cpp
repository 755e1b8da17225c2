#include "bmfal/tape.hpp"

#include <cmath>

namespace bmfal {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace

int Tape::push(Op op, int a, int b, Eigen::MatrixXd val, double c, std::vector<int> idx) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.idx = std::move(idx);
  n.val = std::move(val);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::matmul(int a, int b) {
  require(nodes_[a].val.cols() == nodes_[b].val.rows(), "tape matmul: inner dimension mismatch");
  return push(Op::kMatMul, a, b, nodes_[a].val * nodes_[b].val);
}

int Tape::add(int a, int b) {
  require(nodes_[a].val.rows() == nodes_[b].val.rows() && nodes_[a].val.cols() == nodes_[b].val.cols(),
          "tape add: shape mismatch");
  return push(Op::kAdd, a, b, nodes_[a].val + nodes_[b].val);
}

int Tape::sub(int a, int b) {
  require(nodes_[a].val.rows() == nodes_[b].val.rows() && nodes_[a].val.cols() == nodes_[b].val.cols(),
          "tape sub: shape mismatch");
  return push(Op::kSub, a, b, nodes_[a].val - nodes_[b].val);
}

int Tape::scale(int a, double c) { return push(Op::kScale, a, -1, c * nodes_[a].val, c); }

int Tape::mul(int a, int b) {
  require(nodes_[a].val.rows() == nodes_[b].val.rows() && nodes_[a].val.cols() == nodes_[b].val.cols(),
          "tape mul: shape mismatch");
  return push(Op::kMul, a, b, nodes_[a].val.cwiseProduct(nodes_[b].val));
}

int Tape::exp(int a) { return push(Op::kExp, a, -1, nodes_[a].val.array().exp().matrix()); }

int Tape::log(int a) { return push(Op::kLog, a, -1, nodes_[a].val.array().log().matrix()); }

int Tape::tanh(int a) { return push(Op::kTanh, a, -1, nodes_[a].val.array().tanh().matrix()); }

int Tape::softplus(int a) {
  return push(Op::kSoftplus, a, -1, nodes_[a].val.unaryExpr([](double x) { return softplus_value(x); }));
}

int Tape::vconcat(int a, int b) {
  require(nodes_[a].val.cols() == nodes_[b].val.cols(), "tape vconcat: column mismatch");
  Eigen::MatrixXd v(nodes_[a].val.rows() + nodes_[b].val.rows(), nodes_[a].val.cols());
  v.topRows(nodes_[a].val.rows()) = nodes_[a].val;
  v.bottomRows(nodes_[b].val.rows()) = nodes_[b].val;
  return push(Op::kVConcat, a, b, std::move(v));
}

int Tape::reshape(int a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == nodes_[a].val.size(), "tape reshape: element count mismatch");
  Eigen::MatrixXd v = Eigen::Map<const Eigen::MatrixXd>(nodes_[a].val.data(), rows, cols);
  return push(Op::kReshape, a, -1, std::move(v));
}

int Tape::gather_cols(int a, std::vector<int> cols) {
  Eigen::MatrixXd v(nodes_[a].val.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    require(cols[j] >= 0 && cols[j] < nodes_[a].val.cols(), "tape gather_cols: index out of range");
    v.col(static_cast<Eigen::Index>(j)) = nodes_[a].val.col(cols[j]);
  }
  return push(Op::kGatherCols, a, -1, std::move(v), 0.0, std::move(cols));
}

int Tape::add_colvec(int m, int v) {
  require(nodes_[v].val.cols() == 1 && nodes_[v].val.rows() == nodes_[m].val.rows(),
          "tape add_colvec: vector shape mismatch");
  Eigen::MatrixXd out = nodes_[m].val;
  out.colwise() += Eigen::VectorXd(nodes_[v].val.col(0));
  return push(Op::kAddColVec, m, v, std::move(out));
}

int Tape::sum_squares(int a) {
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = nodes_[a].val.squaredNorm();
  return push(Op::kSumSquares, a, -1, std::move(s));
}

int Tape::sum(int a) {
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = nodes_[a].val.sum();
  return push(Op::kSum, a, -1, std::move(s));
}

int Tape::diag_vec(int a) {
  require(nodes_[a].val.rows() == nodes_[a].val.cols(), "tape diag_vec: matrix must be square");
  Eigen::MatrixXd v = nodes_[a].val.diagonal();
  return push(Op::kDiagVec, a, -1, std::move(v));
}

int Tape::lower_softplus_diag(int a) {
  require(nodes_[a].val.rows() == nodes_[a].val.cols(), "tape lower_softplus_diag: matrix must be square");
  const Eigen::Index n = nodes_[a].val.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    l(j, j) = softplus_value(nodes_[a].val(j, j));
    for (Eigen::Index i = j + 1; i < n; ++i) l(i, j) = nodes_[a].val(i, j);
  }
  return push(Op::kLowerSoftplusDiag, a, -1, std::move(l));
}

void Tape::clear_adjoints() {
  for (auto& n : nodes_) n.adj.resize(0, 0);
}

void Tape::backward(int root) {
  require(nodes_[root].val.size() == 1, "tape backward: root must be scalar");
  backward_seed(root, Eigen::MatrixXd::Ones(1, 1));
}

void Tape::backward_seed(int node, const Eigen::MatrixXd& seed) {
  require(seed.rows() == nodes_[node].val.rows() && seed.cols() == nodes_[node].val.cols(),
          "tape backward_seed: seed shape mismatch");
  clear_adjoints();
  nodes_[node].adj = seed;
  sweep();
}

void Tape::sweep() {
  auto acc = [&](int id, const Eigen::MatrixXd& g) {
    Node& n = nodes_[id];
    if (n.adj.size() == 0)
      n.adj = g;
    else
      n.adj += g;
  };

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.adj.size() == 0) continue;
    const Eigen::MatrixXd& g = n.adj;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kMatMul:
        acc(n.a, g * nodes_[n.b].val.transpose());
        acc(n.b, nodes_[n.a].val.transpose() * g);
        break;
      case Op::kAdd:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case Op::kSub:
        acc(n.a, g);
        acc(n.b, -g);
        break;
      case Op::kScale:
        acc(n.a, n.c * g);
        break;
      case Op::kMul:
        acc(n.a, g.cwiseProduct(nodes_[n.b].val));
        acc(n.b, g.cwiseProduct(nodes_[n.a].val));
        break;
      case Op::kExp:
        acc(n.a, g.cwiseProduct(n.val));
        break;
      case Op::kLog:
        acc(n.a, g.cwiseQuotient(nodes_[n.a].val));
        break;
      case Op::kTanh:
        acc(n.a, g.cwiseProduct((1.0 - n.val.array().square()).matrix()));
        break;
      case Op::kSoftplus:
        acc(n.a, g.cwiseProduct(nodes_[n.a].val.unaryExpr([](double x) { return sigmoid_value(x); })));
        break;
      case Op::kVConcat:
        acc(n.a, g.topRows(nodes_[n.a].val.rows()));
        acc(n.b, g.bottomRows(nodes_[n.b].val.rows()));
        break;
      case Op::kReshape:
        acc(n.a, Eigen::Map<const Eigen::MatrixXd>(g.data(), nodes_[n.a].val.rows(),
                                                   nodes_[n.a].val.cols()));
        break;
      case Op::kGatherCols: {
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(nodes_[n.a].val.rows(), nodes_[n.a].val.cols());
        for (std::size_t j = 0; j < n.idx.size(); ++j)
          ga.col(n.idx[j]) += g.col(static_cast<Eigen::Index>(j));
        acc(n.a, ga);
        break;
      }
      case Op::kAddColVec:
        acc(n.a, g);
        acc(n.b, g.rowwise().sum());
        break;
      case Op::kSumSquares:
        acc(n.a, 2.0 * g(0, 0) * nodes_[n.a].val);
        break;
      case Op::kSum:
        acc(n.a, Eigen::MatrixXd::Constant(nodes_[n.a].val.rows(), nodes_[n.a].val.cols(), g(0, 0)));
        break;
      case Op::kDiagVec: {
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(nodes_[n.a].val.rows(), nodes_[n.a].val.cols());
        ga.diagonal() = g.col(0);
        acc(n.a, ga);
        break;
      }
      case Op::kLowerSoftplusDiag: {
        const Eigen::MatrixXd& raw = nodes_[n.a].val;
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
        for (Eigen::Index j = 0; j < raw.cols(); ++j) {
          ga(j, j) = g(j, j) * sigmoid_value(raw(j, j));
          for (Eigen::Index i = j + 1; i < raw.rows(); ++i) ga(i, j) = g(i, j);
        }
        acc(n.a, ga);
        break;
      }
    }
  }
}

}  // namespace bmfal
