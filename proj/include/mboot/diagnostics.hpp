#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <variant>

#include <Eigen/Dense>

#include "mboot/error.hpp"
#include "mboot/generators.hpp"
#include "mboot/linalg.hpp"
#include "mboot/model.hpp"
#include "mboot/optimizer.hpp"

namespace mboot {

// Modelling-bias matrices at theta*:
//   D^2 = -grad^2 E L,  H^2 = sum_i E[grad l_i grad l_i^T],
//   B^2 = sum_i E[grad l_i] E[grad l_i]^T,  smb = ||H^{-1} B^2 H^{-1}||.
// H^2 - B^2 is the covariance of grad L(theta*).
struct BiasDiagnostics {
  Eigen::MatrixXd d2;
  Eigen::MatrixXd h2;
  Eigen::MatrixXd b2;
  double smb = 0.0;
  Theta theta_star;
};

// Empirical plug-in at theta: H^2 = sum_i grad l_i grad l_i^T and
// D^2 = -grad^2 L (empty for the non-smooth quantile family). B^2 needs the
// per-observation score means, which one sample does not identify, so b2 = 0.
inline BiasDiagnostics plug_in_matrices(const Model& model, const Theta& theta) {
  const Eigen::VectorXd g = index_gradients(model, theta);
  const auto& psi = model.data().psi();
  const auto nonzero = static_cast<std::size_t>((g.array() != 0.0).count());
  if (nonzero < model.p()) {
    throw SingularMatrix("plug_in_matrices: H^2 has rank at most " + std::to_string(nonzero) +
                         " < p = " + std::to_string(model.p()));
  }
  BiasDiagnostics out;
  out.h2 = psi.transpose() * (psi.array().colwise() * g.array().square()).matrix();
  out.h2 = 0.5 * (out.h2 + out.h2.transpose());
  if (Eigen::LLT<Eigen::MatrixXd>(out.h2).info() != Eigen::Success) {
    throw SingularMatrix("plug_in_matrices: H^2 is singular");
  }
  if (model.smooth()) out.d2 = -hessian(model, theta);
  const auto p = static_cast<Eigen::Index>(model.p());
  out.b2 = Eigen::MatrixXd::Zero(p, p);
  out.smb = smb_value(out.h2, out.b2);
  out.theta_star = theta;
  return out;
}

// Exact matrices under the generator's law. Both fit families are single
// index models with d l_i / d eta = Y_i - mu(eta_i), so with
// b_i = E Y_i - mu(eta_i*) and v_i = Var Y_i:
//   H^2 = sum (v_i + b_i^2) psi_i psi_i^T,  B^2 = sum b_i^2 psi_i psi_i^T,
//   D^2 = sum mu'(eta_i*) psi_i psi_i^T.
inline BiasDiagnostics population_matrices(const TrueModelSpec& spec) {
  const Eigen::MatrixXd psi = spec.design();
  const Eigen::VectorXd eta = psi * spec.theta_star();
  const Eigen::VectorXd m = spec.means();
  const Eigen::VectorXd v = spec.variances();
  Eigen::VectorXd mu(eta.size()), slope(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (spec.fit_family() == FitFamily::gaussian_linear) {
      mu(i) = eta(i);
      slope(i) = 1.0;
    } else {
      mu(i) = GlmLink::sigmoid(eta(i));
      slope(i) = mu(i) * (1.0 - mu(i));
    }
  }
  const Eigen::ArrayXd bias_sq = (m - mu).array().square();
  auto gram = [&psi](const Eigen::ArrayXd& w) {
    Eigen::MatrixXd g = psi.transpose() * (psi.array().colwise() * w).matrix();
    return Eigen::MatrixXd(0.5 * (g + g.transpose()));
  };
  BiasDiagnostics out;
  out.d2 = gram(slope.array());
  out.h2 = gram(v.array() + bias_sq);
  out.b2 = gram(bias_sq);
  out.smb = smb_value(out.h2, out.b2);
  out.theta_star = spec.theta_star();
  return out;
}

// Closed forms of ||H^{-1} B^2 H^{-1}|| for the two biased generators with
// their natural quasi-likelihoods.
inline double smb_sin_bias_closed_form(double beta, std::size_t n) {
  const double nn = static_cast<double>(n);
  return 1.0 - 1.0 / (beta * beta * (nn - 1.0) / (2.0 * nn) + 1.0);
}

inline double smb_logistic_bias_closed_form(double beta, std::size_t n) {
  const double nn = static_cast<double>(n);
  return beta / (1.0 - beta) * (nn + 1.0) / (3.0 * (nn - 1.0));
}

// Whether smb is within the 1/sqrt(n) small-bias regime.
inline bool smb_within_root_n(double smb, std::size_t n) {
  return smb <= 1.0 / std::sqrt(static_cast<double>(n));
}

// GLM upper bound 1 - min_i Var Y_i / (Var Y_i + (E Y_i - d'(psi_i^T theta*))^2).
inline double smb_bound_glm(const Model& model, const Eigen::VectorXd& true_means,
                            const Eigen::VectorXd& true_vars, const Theta& theta_star) {
  detail::check_theta(model, theta_star);
  const auto n = static_cast<Eigen::Index>(model.n());
  if (true_means.size() != n || true_vars.size() != n) {
    throw std::invalid_argument("smb_bound_glm: means and variances need length n");
  }
  if (!(true_vars.array() >= 0.0).all()) throw std::invalid_argument("smb_bound_glm: variances must be nonnegative");
  const GlmLink link = std::visit(
      [](const auto& f) -> GlmLink {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, GaussianLinear>) return GlmLink::normal();
        else if constexpr (std::is_same_v<F, BernoulliGlm>) return GlmLink::binomial();
        else if constexpr (std::is_same_v<F, GlmCanonical>) return f.link;
        else throw std::invalid_argument("smb_bound_glm: family is not a GLM");
      },
      model.family());
  const Eigen::VectorXd eta = model.data().psi() * theta_star;
  double worst = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!link.in_domain(eta(i))) throw InvalidModel("smb_bound_glm: theta* outside the natural domain");
    const double bias = true_means(i) - link.d1(eta(i));
    const double denom = true_vars(i) + bias * bias;
    if (denom > 0.0) worst = std::min(worst, true_vars(i) / denom);
  }
  return std::isfinite(worst) ? 1.0 - worst : 0.0;
}

// Quantile-regression bound with p_i = P{Y_i - psi_i^T theta* < 0}:
// 1 - min_i p_i (1 - p_i) / (p_i (1 - p_i) + (tau - p_i)^2).
inline double smb_bound_quantile(double tau, std::span<const double> hit_probs) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("smb_bound_quantile: tau must lie in (0,1)");
  if (hit_probs.empty()) throw std::invalid_argument("smb_bound_quantile: no observations");
  double worst = std::numeric_limits<double>::infinity();
  for (double p : hit_probs) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("smb_bound_quantile: probabilities must lie in (0,1)");
    const double var = p * (1.0 - p);
    worst = std::min(worst, var / (var + (tau - p) * (tau - p)));
  }
  return 1.0 - worst;
}

// xi = D^{-1} grad L(theta*) for a supplied D^2.
inline Eigen::VectorXd normalized_score(const Model& model, const Theta& theta_star, const Eigen::MatrixXd& d2) {
  return symmetric_inverse_sqrt(d2) * score(model, theta_star);
}

inline Eigen::VectorXd normalized_score(const TrueModelSpec& spec, const Dataset& data) {
  return normalized_score(spec.fit_model(data), spec.theta_star(), population_matrices(spec).d2);
}

// |sqrt(2 (L(theta_tilde) - L(theta*))) - ||xi|||
inline double wilks_residual(const Model& model, const Theta& theta_star, const Eigen::MatrixXd& d2) {
  const double lr = lr_statistic(model, theta_star);
  return std::abs(std::sqrt(std::max(0.0, 2.0 * lr)) - normalized_score(model, theta_star, d2).norm());
}

inline double wilks_residual(const TrueModelSpec& spec, const Dataset& data) {
  return wilks_residual(spec.fit_model(data), spec.theta_star(), population_matrices(spec).d2);
}

}  // namespace mboot
