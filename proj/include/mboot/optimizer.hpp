#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "mboot/error.hpp"
#include "mboot/model.hpp"

namespace mboot {

struct FitResult {
  Theta theta_hat;
  double loglik_at_max = 0.0;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

struct NewtonOptions {
  std::size_t max_iterations = 200;
  int max_halvings = 30;
  // Parameter box ||theta||_inf <= box for GLM families.
  double box = 50.0;
  // Called with (iteration, theta, log-likelihood) after every accepted step.
  std::function<void(std::size_t, const Theta&, double)> on_step;
};

inline double gradient_tolerance(std::size_t n) {
  return 1e-10 * std::max(1.0, static_cast<double>(n));
}

namespace detail {

inline FitResult fit_gaussian(const Model& model, const Eigen::VectorXd* u) {
  const auto& q = model.basis_q();
  const auto& y = model.data().y();
  if (!model.full_rank()) {
    throw NonConvergence("gaussian_linear: design matrix is rank deficient",
                         Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.p())));
  }
  Eigen::VectorXd coef;
  if (u == nullptr) {
    coef = q.transpose() * y;
  } else {
    const Eigen::MatrixXd uq = q.array().colwise() * u->array();
    const Eigen::MatrixXd m = q.transpose() * uq;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    const auto diag = llt.matrixLLT().diagonal();
    if (llt.info() != Eigen::Success || diag.minCoeff() <= 1e-6 * diag.maxCoeff()) {
      throw DegenerateDraw("gaussian_linear: weighted design is not positive definite");
    }
    coef = llt.solve(uq.transpose() * y);
  }
  FitResult fit;
  fit.theta_hat = model.basis_r().triangularView<Eigen::Upper>().solve(coef);
  const Eigen::VectorXd resid = y - q * coef;
  Eigen::VectorXd wr = resid;
  if (u) wr.array() *= u->array();
  fit.loglik_at_max = -0.5 * resid.dot(wr);
  fit.grad_norm = (model.data().psi().transpose() * wr).norm();
  fit.iterations = 0;
  fit.converged = fit.grad_norm <= gradient_tolerance(model.n());
  return fit;
}

// Ascent direction solving (-H) step = g; falls back to a ridge and then to
// an eigenvalue shift when -H is not positive definite.
inline Eigen::VectorXd ascent_direction(const Eigen::MatrixXd& neg_hessian, const Eigen::VectorXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  const auto p = neg_hessian.rows();
  const double ridge = 1e-8 * std::abs(neg_hessian.trace()) / static_cast<double>(p);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
  llt.compute(neg_hessian + ridge * eye);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(neg_hessian);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double shift = -lo + std::max(1e-8 * hi, 1e-12);
  llt.compute(neg_hessian + shift * eye);
  return llt.solve(g);
}

inline Theta glm_initial_point(const Model& model) {
  Theta zero = Theta::Zero(static_cast<Eigen::Index>(model.p()));
  if (std::isfinite(log_lik_unchecked(model, zero, nullptr))) return zero;
  // Exponential-type links exclude 0: regress the constant index -1/mean(y).
  const double ybar = model.data().y().mean();
  if (ybar > 0.0) {
    const Eigen::VectorXd target =
        Eigen::VectorXd::Constant(model.data().y().size(), -1.0 / ybar);
    Theta start = model.data().psi().colPivHouseholderQr().solve(target);
    if (start.allFinite() && std::isfinite(log_lik_unchecked(model, start, nullptr))) return start;
  }
  throw NonConvergence("newton: no feasible starting point", zero);
}

[[noreturn]] inline void fail_box(bool weighted, const Theta& theta) {
  if (weighted) throw DegenerateDraw("weighted likelihood has no maximizer inside the parameter box");
  throw NonConvergence("newton: iterate left the parameter box", theta);
}

inline FitResult newton(const Model& model, const Eigen::VectorXd* u, Theta theta,
                        const NewtonOptions& opts) {
  const bool weighted = u != nullptr;
  const double tol = gradient_tolerance(model.n());
  double ll = log_lik_unchecked(model, theta, u);
  if (!std::isfinite(ll)) throw NonConvergence("newton: infeasible starting point", theta);

  FitResult fit;
  for (std::size_t iter = 0;; ++iter) {
    const Eigen::VectorXd g = score_impl(model, theta, u);
    const double gnorm = g.norm();
    if (gnorm <= tol) {
      fit.iterations = iter;
      fit.grad_norm = gnorm;
      break;
    }
    if (iter >= opts.max_iterations) {
      throw NonConvergence("newton: no convergence after " + std::to_string(iter) + " iterations",
                           theta);
    }
    const Eigen::MatrixXd neg_h = -hessian_impl(model, theta, u);
    const Eigen::VectorXd step = ascent_direction(neg_h, g);

    // Near the maximum the predicted gain drops below the rounding error of L,
    // where comparing L values is meaningless; take the full step there.
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    const bool in_rounding = 0.5 * g.dot(step) <= slack;
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      Theta cand = theta + t * step;
      const double ll_cand = log_lik_unchecked(model, cand, u);
      if (std::isfinite(ll_cand) && (ll_cand >= ll || (in_rounding && ll_cand >= ll - slack))) {
        theta = std::move(cand);
        ll = ll_cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NonConvergence("newton: step halving failed to ascend", theta);
    if (opts.on_step) opts.on_step(iter + 1, theta, ll);
    if (theta.cwiseAbs().maxCoeff() > opts.box) fail_box(weighted, theta);
  }

  // A stationary point is only a maximizer if the curvature there is
  // non-negligible. Signed multipliers can produce saddles, and separated
  // data drive the score to zero along a ray with vanishing curvature.
  const auto& psi = model.data().psi();
  const Eigen::MatrixXd scale_mat =
      u ? Eigen::MatrixXd(psi.transpose() * (psi.array().colwise() * u->array().abs()).matrix())
        : Eigen::MatrixXd(psi.transpose() * psi);
  const double scale = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(scale_mat, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .maxCoeff();
  const double curvature =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(-hessian_impl(model, theta, u), Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  if (!(curvature > 1e-10 * scale)) {
    if (weighted) throw DegenerateDraw("weighted likelihood has no strict maximizer");
    throw NonConvergence("newton: likelihood has no strict maximizer (separated data)", theta);
  }
  fit.theta_hat = std::move(theta);
  fit.loglik_at_max = ll;
  fit.converged = true;
  return fit;
}

inline void require_smooth(const Model& model, const char* what) {
  if (!model.smooth()) {
    throw UnsupportedOperation(std::string(what) + ": quantile family has no smooth maximizer");
  }
}

}  // namespace detail

// Quasi-MLE: argmax of L(theta) = sum_i l_i(theta).
inline FitResult fit_mle(const Model& model, const NewtonOptions& opts = {}) {
  detail::require_smooth(model, "fit_mle");
  if (model.is_gaussian_linear()) return detail::fit_gaussian(model, nullptr);
  return detail::newton(model, nullptr, detail::glm_initial_point(model), opts);
}

// Bootstrap MLE: argmax of sum_i u_i l_i(theta), Newton started at `init`.
inline FitResult fit_weighted_mle(const Model& model, const WeightVector& u, const Theta& init,
                                  const NewtonOptions& opts = {}) {
  detail::require_smooth(model, "fit_weighted_mle");
  detail::check_weights(model, u.values());
  detail::check_theta(model, init);
  if (u.all_ones()) return fit_mle(model, opts);
  if ((u.values().array() == 0.0).all()) throw DegenerateDraw("all multipliers are zero");
  if (model.is_gaussian_linear()) return detail::fit_gaussian(model, &u.values());
  return detail::newton(model, &u.values(), init, opts);
}

inline FitResult fit_weighted_mle(const Model& model, const WeightVector& u,
                                  const NewtonOptions& opts = {}) {
  detail::require_smooth(model, "fit_weighted_mle");
  const Theta init = model.is_gaussian_linear()
                         ? Theta::Zero(static_cast<Eigen::Index>(model.p()))
                         : detail::glm_initial_point(model);
  return fit_weighted_mle(model, u, init, opts);
}

// L(theta_tilde) - L(theta0) for an already computed MLE.
inline double lr_statistic(const Model& model, const FitResult& fit, const Theta& theta0) {
  detail::check_theta(model, theta0);
  if (model.is_gaussian_linear()) {
    // exact quadratic form: |Q^T (y - psi theta0)|^2 / 2
    const Eigen::VectorXd r0 = model.data().y() - model.data().psi() * theta0;
    return 0.5 * (model.basis_q().transpose() * r0).squaredNorm();
  }
  return fit.loglik_at_max - log_lik(model, theta0);
}

inline double lr_statistic(const Model& model, const Theta& theta0) {
  return lr_statistic(model, fit_mle(model), theta0);
}

// Evaluates L°(theta°) - L°(theta_tilde) for many weight vectors on one
// model. The model must outlive the evaluator.
class BootstrapLrEvaluator {
 public:
  BootstrapLrEvaluator(const Model& model, Theta theta_hat, NewtonOptions opts = {})
      : model_(model), theta_hat_(std::move(theta_hat)), opts_(opts) {
    detail::require_smooth(model_, "bootstrap_lr_statistic");
    detail::check_theta(model_, theta_hat_);
    if (model_.is_gaussian_linear()) {
      if (!model_.full_rank()) {
        throw NonConvergence("gaussian_linear: design matrix is rank deficient", theta_hat_);
      }
      residual_ = model_.data().y() - model_.data().psi() * theta_hat_;
    }
  }

  double operator()(const WeightVector& u) const {
    detail::check_weights(model_, u.values());
    // constant unit weights reproduce the unweighted MLE exactly
    if (u.all_ones()) return 0.0;
    if (model_.is_gaussian_linear()) return gaussian(u.values());
    const FitResult fit = fit_weighted_mle(model_, u, theta_hat_, opts_);
    return fit.loglik_at_max - log_lik(model_, theta_hat_, u);
  }

  const Theta& theta_hat() const noexcept { return theta_hat_; }

 private:
  // Weighted quadratic: g^T M^{-1} g / 2 with M = Q^T U Q, g = Q^T U r.
  double gaussian(const Eigen::VectorXd& u) const {
    const auto& q = model_.basis_q();
    const Eigen::MatrixXd uq = q.array().colwise() * u.array();
    const Eigen::MatrixXd m = q.transpose() * uq;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    const auto diag = llt.matrixLLT().diagonal();
    if (llt.info() != Eigen::Success || diag.minCoeff() <= 1e-6 * diag.maxCoeff()) {
      throw DegenerateDraw("gaussian_linear: weighted design is not positive definite");
    }
    const Eigen::VectorXd g = uq.transpose() * residual_;
    const Eigen::VectorXd half = llt.matrixL().solve(g);
    return 0.5 * half.squaredNorm();
  }

  const Model& model_;
  Theta theta_hat_;
  NewtonOptions opts_;
  Eigen::VectorXd residual_;
};

inline double bootstrap_lr_statistic(const Model& model, const WeightVector& u, const Theta& theta_hat) {
  return BootstrapLrEvaluator(model, theta_hat)(u);
}

}  // namespace mboot
