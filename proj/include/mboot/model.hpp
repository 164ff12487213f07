#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "mboot/dataset.hpp"
#include "mboot/error.hpp"

namespace mboot {

using Theta = Eigen::VectorXd;

// Multipliers u_1..u_n reweighting the log-likelihood summands.
class WeightVector {
 public:
  explicit WeightVector(Eigen::VectorXd u) : u_(std::move(u)) {
    if (u_.size() < 1) throw std::invalid_argument("weights: empty vector");
    if (!u_.allFinite()) throw std::invalid_argument("weights: non-finite entry");
  }

  static WeightVector ones(std::size_t n) {
    return WeightVector(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)));
  }

  const Eigen::VectorXd& values() const noexcept { return u_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(u_.size()); }
  bool all_ones() const noexcept { return (u_.array() == 1.0).all(); }

 private:
  Eigen::VectorXd u_;
};

// Canonical-link exponential family l(v) = y v - d(v), given by the cumulant
// d and its first two derivatives.
class GlmLink {
 public:
  enum class Kind { normal, exponential, poisson, binomial, custom };

  using Fn = std::function<double(double)>;
  using DomainFn = std::function<bool(double)>;

  static GlmLink normal() { return GlmLink(Kind::normal, "normal"); }
  // Exp(-v), natural parameter v < 0.
  static GlmLink exponential() { return GlmLink(Kind::exponential, "exponential"); }
  static GlmLink poisson() { return GlmLink(Kind::poisson, "poisson"); }
  static GlmLink binomial() { return GlmLink(Kind::binomial, "binomial"); }

  static GlmLink custom(std::string name, Fn d, Fn d1, Fn d2,
                        DomainFn domain = [](double) { return true; }) {
    GlmLink link(Kind::custom, std::move(name));
    link.d_ = std::move(d);
    link.d1_ = std::move(d1);
    link.d2_ = std::move(d2);
    link.domain_ = std::move(domain);
    return link;
  }

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

  bool in_domain(double v) const {
    switch (kind_) {
      case Kind::exponential: return v < 0.0;
      case Kind::custom: return domain_(v);
      default: return std::isfinite(v);
    }
  }

  double d(double v) const {
    switch (kind_) {
      case Kind::normal: return 0.5 * v * v;
      case Kind::exponential: return -std::log(-v);
      case Kind::poisson: return std::exp(v);
      case Kind::binomial: return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      case Kind::custom: return d_(v);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  double d1(double v) const {
    switch (kind_) {
      case Kind::normal: return v;
      case Kind::exponential: return -1.0 / v;
      case Kind::poisson: return std::exp(v);
      case Kind::binomial: return sigmoid(v);
      case Kind::custom: return d1_(v);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  double d2(double v) const {
    switch (kind_) {
      case Kind::normal: return 1.0;
      case Kind::exponential: return 1.0 / (v * v);
      case Kind::poisson: return std::exp(v);
      case Kind::binomial: {
        const double s = sigmoid(v);
        return s * (1.0 - s);
      }
      case Kind::custom: return d2_(v);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  static double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  }

 private:
  GlmLink(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  Fn d_, d1_, d2_;
  DomainFn domain_;
};

// l_i = -(y_i - psi_i^T theta)^2 / 2
struct GaussianLinear {};
// l_i = y_i v - log(1 + e^v), y_i in {0, 1}
struct BernoulliGlm {};
struct GlmCanonical {
  GlmLink link;
};
// l_i = -rho_tau(y_i - psi_i^T theta); the log tau(1-tau) constant is dropped.
struct QuantileRegression {
  double tau;
};

using Family = std::variant<GaussianLinear, BernoulliGlm, GlmCanonical, QuantileRegression>;

// Value and first two derivatives of l_i with respect to the linear index
// eta = psi_i^T theta. Outside the natural domain value is -inf.
struct IndexTerms {
  double value;
  double d1;
  double d2;
};

namespace detail {

inline IndexTerms terms(const GaussianLinear&, double y, double eta) {
  const double r = y - eta;
  return {-0.5 * r * r, r, -1.0};
}

inline IndexTerms glm_terms(const GlmLink& link, double y, double eta) {
  if (!link.in_domain(eta)) {
    return {-std::numeric_limits<double>::infinity(), 0.0, 0.0};
  }
  return {y * eta - link.d(eta), y - link.d1(eta), -link.d2(eta)};
}

inline IndexTerms terms(const BernoulliGlm&, double y, double eta) {
  static const GlmLink binomial = GlmLink::binomial();
  return glm_terms(binomial, y, eta);
}

inline IndexTerms terms(const GlmCanonical& f, double y, double eta) {
  return glm_terms(f.link, y, eta);
}

// Subgradient convention at the kink: 1{0 < 0} = 0, so d1 = tau there.
inline IndexTerms terms(const QuantileRegression& f, double y, double eta) {
  const double r = y - eta;
  const double ind = r < 0.0 ? 1.0 : 0.0;
  return {-r * (f.tau - ind), f.tau - ind, 0.0};
}

// Calls fn with a callable (y, eta) -> IndexTerms specialised for the family.
template <class Fn>
decltype(auto) with_terms(const Family& family, Fn&& fn) {
  return std::visit(
      [&](const auto& fam) {
        return fn([&fam](double y, double eta) { return terms(fam, y, eta); });
      },
      family);
}

}  // namespace detail

// Quasi-log-likelihood model: a family together with the fixed sample.
class Model {
 public:
  Model(Family family, Dataset data) : family_(std::move(family)), data_(std::move(data)) {
    if (const auto* q = std::get_if<QuantileRegression>(&family_)) {
      if (!(q->tau > 0.0 && q->tau < 1.0)) throw InvalidModel("quantile family: tau must lie in (0,1)");
    }
    if (std::holds_alternative<BernoulliGlm>(family_)) {
      for (Eigen::Index i = 0; i < data_.y().size(); ++i) {
        const double y = data_.y()(i);
        if (y != 0.0 && y != 1.0) throw InvalidModel("bernoulli family: responses must be 0 or 1");
      }
    }
    if (std::holds_alternative<GaussianLinear>(family_)) build_basis();
  }

  const Family& family() const noexcept { return family_; }
  const Dataset& data() const noexcept { return data_; }
  std::size_t n() const noexcept { return data_.n(); }
  std::size_t p() const noexcept { return data_.p(); }

  bool smooth() const noexcept { return !std::holds_alternative<QuantileRegression>(family_); }
  bool is_gaussian_linear() const noexcept { return std::holds_alternative<GaussianLinear>(family_); }

  std::string family_name() const {
    return std::visit(
        [](const auto& f) -> std::string {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, GaussianLinear>) return "gaussian_linear";
          else if constexpr (std::is_same_v<F, BernoulliGlm>) return "bernoulli_glm";
          else if constexpr (std::is_same_v<F, GlmCanonical>) return "glm_" + f.link.name();
          else return "quantile";
        },
        family_);
  }

  // Gaussian linear family only: psi = Q R with orthonormal Q (n x p) and
  // upper-triangular R (p x p). Empty when n < p.
  const Eigen::MatrixXd& basis_q() const noexcept { return q_; }
  const Eigen::MatrixXd& basis_r() const noexcept { return r_; }
  bool full_rank() const noexcept { return full_rank_; }

 private:
  void build_basis() {
    const auto& psi = data_.psi();
    if (psi.rows() < psi.cols()) return;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(psi);
    q_ = qr.householderQ() * Eigen::MatrixXd::Identity(psi.rows(), psi.cols());
    r_ = qr.matrixQR().topRows(psi.cols()).triangularView<Eigen::Upper>();
    const double scale = r_.diagonal().cwiseAbs().maxCoeff();
    full_rank_ = scale > 0.0 && r_.diagonal().cwiseAbs().minCoeff() > 1e-12 * scale;
  }

  Family family_;
  Dataset data_;
  Eigen::MatrixXd q_, r_;
  bool full_rank_ = false;
};

namespace detail {

inline void check_theta(const Model& model, const Theta& theta) {
  if (static_cast<std::size_t>(theta.size()) != model.p()) {
    throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                ", model expects " + std::to_string(model.p()));
  }
  if (!theta.allFinite()) throw std::invalid_argument("theta has non-finite entries");
}

inline void check_weights(const Model& model, const Eigen::VectorXd& u) {
  if (static_cast<std::size_t>(u.size()) != model.n()) {
    throw std::invalid_argument("weights have length " + std::to_string(u.size()) +
                                ", model has n = " + std::to_string(model.n()));
  }
}

// Sum of u_i l_i(theta); -inf when theta leaves the natural domain.
inline double log_lik_unchecked(const Model& model, const Theta& theta, const Eigen::VectorXd* u) {
  const Eigen::VectorXd eta = model.data().psi() * theta;
  const auto& y = model.data().y();
  return with_terms(model.family(), [&](auto&& term) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double v = term(y(i), eta(i)).value;
      if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
      total += u ? (*u)(i) * v : v;
    }
    return total;
  });
}

}  // namespace detail

inline bool in_domain(const Model& model, const Theta& theta) {
  detail::check_theta(model, theta);
  return std::isfinite(detail::log_lik_unchecked(model, theta, nullptr));
}

inline double log_lik(const Model& model, const Theta& theta) {
  detail::check_theta(model, theta);
  const double value = detail::log_lik_unchecked(model, theta, nullptr);
  if (!std::isfinite(value)) throw InvalidModel("log_lik: theta outside the natural-parameter domain");
  return value;
}

// Bootstrap log-likelihood L(theta) = sum_i u_i l_i(theta).
inline double log_lik(const Model& model, const Theta& theta, const WeightVector& u) {
  detail::check_theta(model, theta);
  detail::check_weights(model, u.values());
  const double value = detail::log_lik_unchecked(model, theta, &u.values());
  if (!std::isfinite(value)) throw InvalidModel("log_lik: theta outside the natural-parameter domain");
  return value;
}

// d l_i / d eta at every observation, so that grad l_i = index_gradients(i) psi_i.
inline Eigen::VectorXd index_gradients(const Model& model, const Theta& theta) {
  detail::check_theta(model, theta);
  const Eigen::VectorXd eta = model.data().psi() * theta;
  const auto& y = model.data().y();
  Eigen::VectorXd g(y.size());
  detail::with_terms(model.family(), [&](auto&& term) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const IndexTerms t = term(y(i), eta(i));
      if (!std::isfinite(t.value)) throw InvalidModel("score: theta outside the natural-parameter domain");
      g(i) = t.d1;
    }
  });
  return g;
}

namespace detail {

inline Eigen::VectorXd score_impl(const Model& model, const Theta& theta, const Eigen::VectorXd* u) {
  Eigen::VectorXd g = index_gradients(model, theta);
  if (u) g.array() *= u->array();
  return model.data().psi().transpose() * g;
}

inline Eigen::MatrixXd hessian_impl(const Model& model, const Theta& theta, const Eigen::VectorXd* u) {
  if (!model.smooth()) throw UnsupportedOperation("hessian: quantile family is not twice differentiable");
  detail::check_theta(model, theta);
  const auto& psi = model.data().psi();
  const auto& y = model.data().y();
  const Eigen::VectorXd eta = psi * theta;
  Eigen::VectorXd w(y.size());
  with_terms(model.family(), [&](auto&& term) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const IndexTerms t = term(y(i), eta(i));
      if (!std::isfinite(t.value)) throw InvalidModel("hessian: theta outside the natural-parameter domain");
      w(i) = u ? (*u)(i) * t.d2 : t.d2;
    }
  });
  Eigen::MatrixXd h = psi.transpose() * (psi.array().colwise() * w.array()).matrix();
  // floating-point addition commutes, so this is exactly symmetric
  return 0.5 * (h + h.transpose());
}

}  // namespace detail

inline Eigen::VectorXd score(const Model& model, const Theta& theta) {
  return detail::score_impl(model, theta, nullptr);
}

inline Eigen::VectorXd score(const Model& model, const Theta& theta, const WeightVector& u) {
  detail::check_weights(model, u.values());
  return detail::score_impl(model, theta, &u.values());
}

inline Eigen::MatrixXd hessian(const Model& model, const Theta& theta) {
  return detail::hessian_impl(model, theta, nullptr);
}

inline Eigen::MatrixXd hessian(const Model& model, const Theta& theta, const WeightVector& u) {
  detail::check_weights(model, u.values());
  return detail::hessian_impl(model, theta, &u.values());
}

}  // namespace mboot
