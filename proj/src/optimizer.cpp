#include "bmfal/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace bmfal {

namespace {

struct ProbeCounter {
  long total = 0;
  long bad = 0;
};

class BoxLbfgs {
 public:
  BoxLbfgs(const Objective& f, const DomainBox& box, const OptimizerConfig& cfg, ProbeCounter& probes)
      : f_(f), box_(box), cfg_(cfg), probes_(probes) {}

  // Maximizes f from x0; returns the best point and value found.
  std::pair<Eigen::VectorXd, double> run(Eigen::VectorXd x0) {
    Eigen::VectorXd x = box_.clip(std::move(x0));
    double fx = eval(x);
    if (!std::isfinite(fx)) return {x, -std::numeric_limits<double>::infinity()};

    Eigen::VectorXd g = gradient(x);
    for (int it = 0; it < cfg_.max_iters; ++it) {
      const bool have_memory = !mem_s_.empty();
      Eigen::VectorXd dir = ascent_direction(g);
      // backtracking with projection; the actual (clipped) step is used in
      // the sufficient-increase test
      bool accepted = false;
      Eigen::VectorXd trial;
      double ftrial = 0.0;
      auto line_search = [&](const Eigen::VectorXd& d, bool armijo) {
        double alpha = 1.0;
        for (int ls = 0; ls < 30; ++ls) {
          trial = box_.clip(x + alpha * d);
          const Eigen::VectorXd step = trial - x;
          if (step.lpNorm<Eigen::Infinity>() == 0.0) return;
          ftrial = eval(trial);
          const double floor = armijo ? fx + 1e-4 * g.dot(step) : fx;
          if (std::isfinite(ftrial) && ftrial > floor) {
            accepted = true;
            return;
          }
          alpha *= 0.5;
        }
      };
      line_search(dir, true);
      if (!accepted && have_memory) line_search(g, false);  // fall back to steepest ascent
      if (!accepted) break;

      const Eigen::VectorXd step = trial - x;
      Eigen::VectorXd gnew = gradient(trial);
      const Eigen::VectorXd ydiff = gnew - g;
      const double sy = -step.dot(ydiff);  // curvature in minimization convention
      if (sy > 1e-12 * step.norm() * ydiff.norm()) push_pair(step, -ydiff);

      const bool small_step = step.lpNorm<Eigen::Infinity>() <= cfg_.tol * (1.0 + x.lpNorm<Eigen::Infinity>());
      x = trial;
      fx = ftrial;
      g = std::move(gnew);
      if (small_step || projected_gradient_norm(x, g) <= cfg_.tol) break;
    }
    return {x, fx};
  }

 private:
  double eval(const Eigen::VectorXd& x) {
    const double v = f_(x);
    ++probes_.total;
    if (!std::isfinite(v)) ++probes_.bad;
    return v;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = cfg_.grad_step * (1.0 + std::abs(x(j)));
      Eigen::VectorXd xp = x, xm = x;
      xp(j) = std::min(x(j) + h, box_.upper(j));
      xm(j) = std::max(x(j) - h, box_.lower(j));
      const double denom = xp(j) - xm(j);
      if (denom <= 0.0) {
        g(j) = 0.0;
        continue;
      }
      const double fp = eval(xp);
      const double fm = eval(xm);
      g(j) = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / denom : 0.0;
    }
    return g;
  }

  // Two-loop recursion on the minimization of -f; returns an ascent direction.
  Eigen::VectorXd ascent_direction(const Eigen::VectorXd& g) {
    if (mem_s_.empty()) return g;
    Eigen::VectorXd q = -g;  // gradient of -f
    const std::size_t m = mem_s_.size();
    std::vector<double> alpha(m);
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_[i] * mem_s_[i].dot(q);
      q -= alpha[i] * mem_y_[i];
    }
    const double gamma = mem_s_.back().dot(mem_y_.back()) / mem_y_.back().squaredNorm();
    q *= gamma;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_[i] * mem_y_[i].dot(q);
      q += (alpha[i] - beta) * mem_s_[i];
    }
    Eigen::VectorXd dir = -q;  // back to ascent convention
    if (dir.dot(g) <= 0.0) return g;
    return dir;
  }

  void push_pair(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
    mem_s_.push_back(s);
    mem_y_.push_back(y);
    rho_.push_back(1.0 / s.dot(y));
    if (mem_s_.size() > 6) {
      mem_s_.pop_front();
      mem_y_.pop_front();
      rho_.pop_front();
    }
  }

  double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    return (box_.clip(x + g) - x).lpNorm<Eigen::Infinity>();
  }

  const Objective& f_;
  const DomainBox& box_;
  const OptimizerConfig& cfg_;
  ProbeCounter& probes_;
  std::deque<Eigen::VectorXd> mem_s_, mem_y_;
  std::deque<double> rho_;
};

}  // namespace

MaximizeResult maximize(const Objective& objective, const DomainBox& domain,
                        const OptimizerConfig& config) {
  config.validate();
  ProbeCounter probes;

  MaximizeResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::VectorXd x0;
    if (r == 0) {
      x0 = domain.center();
    } else {
      Rng rng(derive_seed(config.seed, 0x0b75, static_cast<std::uint64_t>(r)));
      x0 = domain.sample(rng);
    }
    BoxLbfgs solver(objective, domain, config, probes);
    auto [x, fx] = solver.run(std::move(x0));
    if (fx > best.value) {
      best.x = x;
      best.value = fx;
    }
  }
  best.restarts_used = config.restarts;

  if (probes.bad * 2 > probes.total)
    throw OptimizerError("maximize: objective was non-finite at more than half of the probes");
  if (!std::isfinite(best.value))
    throw OptimizerError("maximize: no restart produced a finite objective value");
  return best;
}

}  // namespace bmfal
