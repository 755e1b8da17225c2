#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bmfal/domain.hpp"
#include "bmfal/errors.hpp"
#include "bmfal/gaussian.hpp"
#include "bmfal/rng.hpp"

namespace bmfal {

enum class Activation { kTanh, kIdentity };
enum class CovType { kFull, kDiag };

// Architecture of the deep multi-fidelity surrogate. The fidelity-m feature
// network consumes [x; h_{m-1}(x)], so its input width is r + k_{m-1}
// (k_0 = 0). All fidelities share the hidden width and depth.
struct ModelConfig {
  int num_fidelities = 1;
  int input_dim = 1;
  std::vector<int> latent_dims;
  std::vector<int> output_dims;
  int hidden_width = 16;
  int hidden_layers = 2;
  Activation activation = Activation::kTanh;
  CovType cov_type = CovType::kFull;

  void validate() const;
  // 0-based fidelity index.
  int net_input_dim(int m) const { return input_dim + (m == 0 ? 0 : latent_dims[m - 1]); }
  int weight_dim(int m) const { return latent_dims[m] * hidden_width; }
  int total_weight_dim() const {
    int p = 0;
    for (int m = 0; m < num_fidelities; ++m) p += weight_dim(m);
    return p;
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int elbo_mc_samples = 1;
  double prior_var = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Example {
  Eigen::VectorXd x;
  int fidelity = 0;  // 0-based internally; file formats use 1-based
  Eigen::VectorXd y;
  double cost = 0.0;
};

struct Dataset {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  void add(Example e) { examples.push_back(std::move(e)); }
  // Shape and domain checks against a model configuration.
  void validate(const ModelConfig& config, const DomainBox& domain) const;
};

// Per-fidelity parameters. The last-layer weights W_m are random with
// variational posterior N(mu, L L^T); everything else is a point estimate.
// All tensors are stored as matrices (vectors as single columns, scalars as
// 1x1) so that training and serialization can treat them uniformly.
struct FidelityParams {
  std::vector<Eigen::MatrixXd> layer_w;
  std::vector<Eigen::MatrixXd> layer_b;
  Eigen::MatrixXd mu;         // P x 1, P = k_m * hidden_width
  Eigen::MatrixXd chol_raw;   // P x P (full) or P x 1 (diag); diagonal stored pre-softplus
  Eigen::MatrixXd projection; // d_m x k_m
  Eigen::MatrixXd log_noise;  // 1 x 1, tau_m = exp(log_noise)
};

class MfModel {
 public:
  MfModel(ModelConfig config, DomainBox domain, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const DomainBox& domain() const { return domain_; }
  int num_fidelities() const { return config_.num_fidelities; }

  FidelityParams& fidelity(int m) { return params_[m]; }
  const FidelityParams& fidelity(int m) const { return params_[m]; }

  double noise_var(int m) const { return std::exp(params_[m].log_noise(0, 0)); }
  // Materialized Cholesky factor of the variational covariance (P x P lower
  // triangular with positive diagonal).
  Eigen::MatrixXd chol_factor(int m) const;

  // Ordered registry of every trainable tensor (stable across calls; used by
  // the trainer, the gradient checks, and the checkpoint format).
  struct TensorRef {
    std::string name;
    Eigen::MatrixXd* tensor;
  };
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> tensors() const;  // pointers into a const model; do not write

  // Deterministic multi-fidelity forward pass at explicit last-layer
  // weights. Returns h_1..h_M for a single input.
  std::vector<Eigen::VectorXd> forward_latents(const std::vector<Eigen::MatrixXd>& weights,
                                               const Eigen::VectorXd& x) const;
  // Column-batched variant: X is r x N, result m is k_m x N.
  std::vector<Eigen::MatrixXd> forward_latents_batch(const std::vector<Eigen::MatrixXd>& weights,
                                                     const Eigen::MatrixXd& xs) const;

  // Reparameterized posterior draw W_m = unvec(mu_m + L_m eps).
  std::vector<Eigen::MatrixXd> sample_weights(Rng& rng) const;
  // Posterior means unvec(mu_m).
  std::vector<Eigen::MatrixXd> mean_weights() const;

  std::uint64_t train_invocations() const { return train_invocations_; }
  void set_train_invocations(std::uint64_t n) { train_invocations_ = n; }

 private:
  friend void train(MfModel&, const Dataset&, const TrainConfig&);

  ModelConfig config_;
  DomainBox domain_;
  std::vector<FidelityParams> params_;
  std::uint64_t train_invocations_ = 0;
};

// Stochastic evidence lower bound: reparameterized Gaussian log-likelihood
// expectation plus exact KL to the N(0, prior_var I) prior on each vec(W_m).
// The same noise_seed always yields the same draw, so the value is a
// deterministic function of (model, dataset, config, noise_seed).
double elbo(const MfModel& model, const Dataset& data, const TrainConfig& config,
            std::uint64_t noise_seed);

// ELBO and its gradient with respect to every tensor in model.tensors(),
// in registry order.
double elbo_with_grads(const MfModel& model, const Dataset& data, const TrainConfig& config,
                       std::uint64_t noise_seed, std::vector<Eigen::MatrixXd>* grads);

// Adam ascent on the ELBO. Keeps the best iterate as measured by a fixed
// evaluation seed, so the returned model never scores below the entry model.
// A non-finite loss triggers one automatic retry from the entry parameters
// at half the learning rate before erroring out.
void train(MfModel& model, const Dataset& data, const TrainConfig& config);

struct Prediction {
  Eigen::VectorXd mean;        // d_m
  GaussianBelief latent;       // over h_m, from the delta method
};

// Mean prediction at the variational mean plus the delta-method latent
// belief. Defined in the delta-method translation unit.
Prediction predict(const MfModel& model, const Eigen::VectorXd& x, int fidelity);

}  // namespace bmfal
