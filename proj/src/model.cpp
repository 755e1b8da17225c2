#include "bmfal/model.hpp"

#include <cmath>
#include <limits>

#include "bmfal/tape.hpp"

namespace bmfal {

namespace {

double inv_softplus(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

}  // namespace

void ModelConfig::validate() const {
  if (num_fidelities < 1) throw ContractError("ModelConfig: num_fidelities must be positive");
  if (input_dim < 1) throw ContractError("ModelConfig: input_dim must be positive");
  if (static_cast<int>(latent_dims.size()) != num_fidelities ||
      static_cast<int>(output_dims.size()) != num_fidelities)
    throw ContractError("ModelConfig: latent_dims and output_dims must have one entry per fidelity");
  for (int k : latent_dims)
    if (k < 1) throw ContractError("ModelConfig: latent dims must be positive");
  for (int d : output_dims)
    if (d < 1) throw ContractError("ModelConfig: output dims must be positive");
  if (hidden_width < 1 || hidden_layers < 1)
    throw ContractError("ModelConfig: hidden width and depth must be positive");
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ContractError("TrainConfig: learning_rate must be positive");
  if (epochs < 0) throw ContractError("TrainConfig: epochs must be nonnegative");
  if (elbo_mc_samples < 1) throw ContractError("TrainConfig: elbo_mc_samples must be positive");
  if (prior_var <= 0) throw ContractError("TrainConfig: prior_var must be positive");
}

void Dataset::validate(const ModelConfig& config, const DomainBox& domain) const {
  for (const auto& e : examples) {
    if (e.fidelity < 0 || e.fidelity >= config.num_fidelities)
      throw ContractError("Dataset: fidelity out of range");
    if (e.x.size() != config.input_dim) throw ContractError("Dataset: input dimension mismatch");
    if (e.y.size() != config.output_dims[e.fidelity])
      throw ContractError("Dataset: output dimension does not match its fidelity");
    if (!domain.contains(e.x, 1e-9)) throw ContractError("Dataset: input outside the domain box");
  }
}

MfModel::MfModel(ModelConfig config, DomainBox domain, std::uint64_t init_seed)
    : config_(std::move(config)), domain_(std::move(domain)) {
  config_.validate();
  if (domain_.dim() != config_.input_dim)
    throw ContractError("MfModel: domain dimension must equal input_dim");

  Rng rng(derive_seed(init_seed, 0x5eed));
  params_.resize(config_.num_fidelities);
  for (int m = 0; m < config_.num_fidelities; ++m) {
    FidelityParams& p = params_[m];
    const int w = config_.hidden_width;
    int in = config_.net_input_dim(m);
    for (int l = 0; l < config_.hidden_layers; ++l) {
      const double a = std::sqrt(6.0 / (in + w));
      Eigen::MatrixXd wl(w, in);
      for (Eigen::Index j = 0; j < wl.cols(); ++j)
        for (Eigen::Index i = 0; i < wl.rows(); ++i) wl(i, j) = rng.uniform(-a, a);
      p.layer_w.push_back(std::move(wl));
      p.layer_b.push_back(Eigen::MatrixXd::Zero(w, 1));
      in = w;
    }
    const int pdim = config_.weight_dim(m);
    p.mu = (0.5 / std::sqrt(static_cast<double>(w))) * rng.normal_matrix(pdim, 1);
    const double raw0 = inv_softplus(0.05);
    if (config_.cov_type == CovType::kFull) {
      p.chol_raw = Eigen::MatrixXd::Zero(pdim, pdim);
      p.chol_raw.diagonal().setConstant(raw0);
    } else {
      p.chol_raw = Eigen::MatrixXd::Constant(pdim, 1, raw0);
    }
    p.projection = (1.0 / std::sqrt(static_cast<double>(config_.latent_dims[m]))) *
                   rng.normal_matrix(config_.output_dims[m], config_.latent_dims[m]);
    p.log_noise = Eigen::MatrixXd::Constant(1, 1, std::log(1e-2));
  }
}

Eigen::MatrixXd MfModel::chol_factor(int m) const {
  const FidelityParams& p = params_[m];
  const int pdim = config_.weight_dim(m);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(pdim, pdim);
  if (config_.cov_type == CovType::kFull) {
    for (int j = 0; j < pdim; ++j) {
      l(j, j) = softplus_value(p.chol_raw(j, j));
      for (int i = j + 1; i < pdim; ++i) l(i, j) = p.chol_raw(i, j);
    }
  } else {
    for (int i = 0; i < pdim; ++i) l(i, i) = softplus_value(p.chol_raw(i, 0));
  }
  return l;
}

std::vector<MfModel::TensorRef> MfModel::tensors() {
  std::vector<TensorRef> out;
  for (int m = 0; m < config_.num_fidelities; ++m) {
    FidelityParams& p = params_[m];
    const std::string tag = "f" + std::to_string(m) + ".";
    for (std::size_t l = 0; l < p.layer_w.size(); ++l) {
      out.push_back({tag + "layer_w" + std::to_string(l), &p.layer_w[l]});
      out.push_back({tag + "layer_b" + std::to_string(l), &p.layer_b[l]});
    }
    out.push_back({tag + "mu", &p.mu});
    out.push_back({tag + "chol_raw", &p.chol_raw});
    out.push_back({tag + "projection", &p.projection});
    out.push_back({tag + "log_noise", &p.log_noise});
  }
  return out;
}

std::vector<MfModel::TensorRef> MfModel::tensors() const {
  return const_cast<MfModel*>(this)->tensors();
}

std::vector<Eigen::MatrixXd> MfModel::forward_latents_batch(
    const std::vector<Eigen::MatrixXd>& weights, const Eigen::MatrixXd& xs) const {
  if (static_cast<int>(weights.size()) != config_.num_fidelities)
    throw ContractError("forward_latents: expected one weight matrix per fidelity");
  if (xs.rows() != config_.input_dim) throw ContractError("forward_latents: input dimension mismatch");
  for (int m = 0; m < config_.num_fidelities; ++m)
    if (weights[m].rows() != config_.latent_dims[m] || weights[m].cols() != config_.hidden_width)
      throw ContractError("forward_latents: weight matrix shape mismatch at fidelity " +
                          std::to_string(m + 1));

  std::vector<Eigen::MatrixXd> latents(config_.num_fidelities);
  Eigen::MatrixXd z;
  for (int m = 0; m < config_.num_fidelities; ++m) {
    if (m == 0) {
      z = xs;
    } else {
      Eigen::MatrixXd cat(xs.rows() + latents[m - 1].rows(), xs.cols());
      cat.topRows(xs.rows()) = xs;
      cat.bottomRows(latents[m - 1].rows()) = latents[m - 1];
      z = std::move(cat);
    }
    const FidelityParams& p = params_[m];
    for (std::size_t l = 0; l < p.layer_w.size(); ++l) {
      z = (p.layer_w[l] * z).colwise() + Eigen::VectorXd(p.layer_b[l].col(0));
      if (config_.activation == Activation::kTanh) z = z.array().tanh().matrix();
    }
    latents[m] = weights[m] * z;
  }
  return latents;
}

std::vector<Eigen::VectorXd> MfModel::forward_latents(const std::vector<Eigen::MatrixXd>& weights,
                                                      const Eigen::VectorXd& x) const {
  auto cols = forward_latents_batch(weights, x);
  std::vector<Eigen::VectorXd> out(cols.size());
  for (std::size_t m = 0; m < cols.size(); ++m) out[m] = cols[m].col(0);
  return out;
}

std::vector<Eigen::MatrixXd> MfModel::sample_weights(Rng& rng) const {
  std::vector<Eigen::MatrixXd> out(config_.num_fidelities);
  for (int m = 0; m < config_.num_fidelities; ++m) {
    const int pdim = config_.weight_dim(m);
    const Eigen::VectorXd eps = rng.normal_vector(pdim);
    Eigen::VectorXd w = params_[m].mu.col(0);
    if (config_.cov_type == CovType::kFull) {
      w += chol_factor(m).triangularView<Eigen::Lower>() * eps;
    } else {
      for (int i = 0; i < pdim; ++i) w(i) += softplus_value(params_[m].chol_raw(i, 0)) * eps(i);
    }
    out[m] = Eigen::Map<const Eigen::MatrixXd>(w.data(), config_.latent_dims[m], config_.hidden_width);
  }
  return out;
}

std::vector<Eigen::MatrixXd> MfModel::mean_weights() const {
  std::vector<Eigen::MatrixXd> out(config_.num_fidelities);
  for (int m = 0; m < config_.num_fidelities; ++m)
    out[m] = Eigen::Map<const Eigen::MatrixXd>(params_[m].mu.data(), config_.latent_dims[m],
                                               config_.hidden_width);
  return out;
}

namespace {

struct ElboGraph {
  Tape tape;
  std::vector<int> leaves;  // one per tensor, registry order
  int root = -1;
};

// Builds the full ELBO graph: likelihood averaged over reparameterized
// draws, minus the closed-form KL of each q(W_m) to N(0, prior_var I).
void build_elbo_graph(const MfModel& model, const Dataset& data, const TrainConfig& config,
                      std::uint64_t noise_seed, ElboGraph& g) {
  const ModelConfig& mc = model.config();
  auto refs = model.tensors();

  // Leaves in registry order, remembering per-fidelity positions.
  std::vector<std::vector<int>> lw(mc.num_fidelities), lb(mc.num_fidelities);
  std::vector<int> lmu(mc.num_fidelities), lraw(mc.num_fidelities), lproj(mc.num_fidelities),
      lnoise(mc.num_fidelities);
  {
    std::size_t i = 0;
    auto make_leaf = [&]() {
      const int id = g.tape.leaf(*refs[i++].tensor);
      g.leaves.push_back(id);
      return id;
    };
    for (int m = 0; m < mc.num_fidelities; ++m) {
      for (int l = 0; l < mc.hidden_layers; ++l) {
        lw[m].push_back(make_leaf());
        lb[m].push_back(make_leaf());
      }
      lmu[m] = make_leaf();
      lraw[m] = make_leaf();
      lproj[m] = make_leaf();
      lnoise[m] = make_leaf();
    }
  }

  // L_m nodes, shared between the reparameterization and the KL.
  std::vector<int> lchol(mc.num_fidelities);
  for (int m = 0; m < mc.num_fidelities; ++m)
    lchol[m] = (mc.cov_type == CovType::kFull) ? g.tape.lower_softplus_diag(lraw[m])
                                               : g.tape.softplus(lraw[m]);

  int total = -1;  // running ELBO node

  if (!data.empty()) {
    const Eigen::Index n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd xs(mc.input_dim, n);
    std::vector<std::vector<int>> by_fid(mc.num_fidelities);
    for (Eigen::Index i = 0; i < n; ++i) {
      xs.col(i) = data.examples[i].x;
      by_fid[data.examples[i].fidelity].push_back(static_cast<int>(i));
    }
    std::vector<Eigen::MatrixXd> ys(mc.num_fidelities);
    for (int m = 0; m < mc.num_fidelities; ++m) {
      ys[m].resize(mc.output_dims[m], static_cast<Eigen::Index>(by_fid[m].size()));
      for (std::size_t j = 0; j < by_fid[m].size(); ++j)
        ys[m].col(static_cast<Eigen::Index>(j)) = data.examples[by_fid[m][j]].y;
    }
    const int x_node = g.tape.constant(xs);

    Rng noise(noise_seed);
    int lik_sum = -1;
    for (int s = 0; s < config.elbo_mc_samples; ++s) {
      // W_m = unvec(mu + L eps)
      std::vector<int> wnode(mc.num_fidelities);
      for (int m = 0; m < mc.num_fidelities; ++m) {
        const int pdim = mc.weight_dim(m);
        const int eps = g.tape.constant(noise.normal_matrix(pdim, 1));
        const int scaled = (mc.cov_type == CovType::kFull) ? g.tape.matmul(lchol[m], eps)
                                                           : g.tape.mul(lchol[m], eps);
        wnode[m] = g.tape.reshape(g.tape.add(lmu[m], scaled), mc.latent_dims[m], mc.hidden_width);
      }
      // latent chain
      std::vector<int> h(mc.num_fidelities);
      for (int m = 0; m < mc.num_fidelities; ++m) {
        int z = (m == 0) ? x_node : g.tape.vconcat(x_node, h[m - 1]);
        for (int l = 0; l < mc.hidden_layers; ++l) {
          z = g.tape.add_colvec(g.tape.matmul(lw[m][l], z), lb[m][l]);
          if (mc.activation == Activation::kTanh) z = g.tape.tanh(z);
        }
        h[m] = g.tape.matmul(wnode[m], z);
      }
      // Gaussian log-likelihood per fidelity block
      int lik_s = -1;
      for (int m = 0; m < mc.num_fidelities; ++m) {
        if (by_fid[m].empty()) continue;
        const double nd = static_cast<double>(by_fid[m].size()) * mc.output_dims[m];
        const int sel = g.tape.gather_cols(h[m], by_fid[m]);
        const int resid = g.tape.sub(g.tape.constant(ys[m]), g.tape.matmul(lproj[m], sel));
        const int sq = g.tape.sum_squares(resid);
        const int inv_tau = g.tape.exp(g.tape.scale(lnoise[m], -1.0));
        int term = g.tape.scale(g.tape.mul(inv_tau, sq), -0.5);
        term = g.tape.add(term, g.tape.scale(lnoise[m], -0.5 * nd));
        term = g.tape.add(term, g.tape.constant(Eigen::MatrixXd::Constant(1, 1, -0.5 * nd * kLog2Pi)));
        lik_s = (lik_s < 0) ? term : g.tape.add(lik_s, term);
      }
      if (lik_s >= 0) lik_sum = (lik_sum < 0) ? lik_s : g.tape.add(lik_sum, lik_s);
    }
    if (lik_sum >= 0) {
      const int lik = g.tape.scale(lik_sum, 1.0 / config.elbo_mc_samples);
      if (!std::isfinite(g.tape.value(lik)(0, 0)))
        throw NumericalError("elbo: non-finite log-likelihood term");
      total = lik;
    }
  }

  // KL(q(W_m) || N(0, prior_var I))
  //   = 0.5 (tr(Sigma)/pv + |mu|^2/pv - P - log det Sigma + P log pv)
  for (int m = 0; m < mc.num_fidelities; ++m) {
    const double pv = config.prior_var;
    const double pdim = static_cast<double>(mc.weight_dim(m));
    int kl = g.tape.scale(g.tape.sum_squares(lchol[m]), 0.5 / pv);
    kl = g.tape.add(kl, g.tape.scale(g.tape.sum_squares(lmu[m]), 0.5 / pv));
    const int ldiag = (mc.cov_type == CovType::kFull) ? g.tape.diag_vec(lchol[m]) : lchol[m];
    kl = g.tape.add(kl, g.tape.scale(g.tape.sum(g.tape.log(ldiag)), -1.0));
    kl = g.tape.add(kl, g.tape.constant(Eigen::MatrixXd::Constant(
                            1, 1, 0.5 * pdim * (std::log(pv) - 1.0))));
    if (!std::isfinite(g.tape.value(kl)(0, 0)))
      throw NumericalError("elbo: non-finite KL term at fidelity " + std::to_string(m + 1));
    const int neg_kl = g.tape.scale(kl, -1.0);
    total = (total < 0) ? neg_kl : g.tape.add(total, neg_kl);
  }
  g.root = total;
}

}  // namespace

double elbo(const MfModel& model, const Dataset& data, const TrainConfig& config,
            std::uint64_t noise_seed) {
  config.validate();
  data.validate(model.config(), model.domain());
  ElboGraph g;
  build_elbo_graph(model, data, config, noise_seed, g);
  return g.tape.value(g.root)(0, 0);
}

double elbo_with_grads(const MfModel& model, const Dataset& data, const TrainConfig& config,
                       std::uint64_t noise_seed, std::vector<Eigen::MatrixXd>* grads) {
  config.validate();
  data.validate(model.config(), model.domain());
  ElboGraph g;
  build_elbo_graph(model, data, config, noise_seed, g);
  g.tape.backward(g.root);
  if (grads) {
    auto refs = model.tensors();
    grads->clear();
    grads->reserve(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Eigen::MatrixXd& adj = g.tape.adjoint(g.leaves[i]);
      if (adj.size() == 0)
        grads->push_back(Eigen::MatrixXd::Zero(refs[i].tensor->rows(), refs[i].tensor->cols()));
      else
        grads->push_back(adj);
    }
  }
  return g.tape.value(g.root)(0, 0);
}

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  int t = 0;
};

bool all_finite(const std::vector<Eigen::MatrixXd>& mats) {
  for (const auto& m : mats)
    if (!m.allFinite()) return false;
  return true;
}

}  // namespace

void train(MfModel& model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  data.validate(model.config(), model.domain());
  if (config.epochs == 0) return;

  auto refs = model.tensors();
  auto snapshot = [&]() {
    std::vector<Eigen::MatrixXd> s;
    s.reserve(refs.size());
    for (auto& r : refs) s.push_back(*r.tensor);
    return s;
  };
  auto restore = [&](const std::vector<Eigen::MatrixXd>& s) {
    for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].tensor = s[i];
  };

  const std::vector<Eigen::MatrixXd> entry = snapshot();
  const std::uint64_t call_seed = derive_seed(config.seed, 0x7e41, model.train_invocations());
  const std::uint64_t eval_seed = derive_seed(call_seed, 0xe7a1);
  TrainConfig eval_cfg = config;
  eval_cfg.elbo_mc_samples = std::max(config.elbo_mc_samples, 2);

  const int eval_stride = std::max(1, config.epochs / 20);

  auto attempt = [&](double lr) -> bool {
    AdamState adam;
    adam.m.resize(refs.size());
    adam.v.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      adam.m[i] = Eigen::MatrixXd::Zero(refs[i].tensor->rows(), refs[i].tensor->cols());
      adam.v[i] = adam.m[i];
    }
    double best_value = elbo(model, data, eval_cfg, eval_seed);
    std::vector<Eigen::MatrixXd> best = snapshot();

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<Eigen::MatrixXd> grads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      double value;
      try {
        value = elbo_with_grads(model, data, config, derive_seed(call_seed, 0xd7aa, epoch), &grads);
      } catch (const NumericalError&) {
        return false;
      }
      if (!std::isfinite(value) || !all_finite(grads)) return false;
      ++adam.t;
      const double corr1 = 1.0 - std::pow(b1, adam.t);
      const double corr2 = 1.0 - std::pow(b2, adam.t);
      for (std::size_t i = 0; i < refs.size(); ++i) {
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * grads[i];
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
        // ascent step
        *refs[i].tensor += (lr / corr1) *
                           (adam.m[i].array() / ((adam.v[i].array() / corr2).sqrt() + eps)).matrix();
      }
      if ((epoch + 1) % eval_stride == 0 || epoch + 1 == config.epochs) {
        const double v = elbo(model, data, eval_cfg, eval_seed);
        if (std::isfinite(v) && v > best_value) {
          best_value = v;
          best = snapshot();
        }
      }
    }
    restore(best);
    return true;
  };

  if (!attempt(config.learning_rate)) {
    restore(entry);
    if (!attempt(0.5 * config.learning_rate)) {
      restore(entry);
      throw NumericalError("train: diverged (non-finite loss) even after halving the learning rate");
    }
  }
  model.set_train_invocations(model.train_invocations() + 1);
}

}  // namespace bmfal
