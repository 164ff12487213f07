#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "mboot/dataset.hpp"
#include "mboot/model.hpp"
#include "mboot/optimizer.hpp"
#include "mboot/rng.hpp"

namespace mboot {

// Data-generating processes of the simulation studies.
enum class Generator {
  // Y = Psi^T theta0 + N(0,1), Psi = (1, X, ..., X^{p-1}), X equidistant on [0,1]
  polynomial_gaussian,
  // Y = Psi^T theta0 + sigma_i Laplace(0, 2^{-1/2}), sigma_i = 0.5 (4 - i mod 4)
  polynomial_laplace_hetero,
  // Y = beta sin(X) + Laplace(0, 2^{-1/2}), X equidistant on [0, 2 pi], p = 1
  sin_bias_laplace,
  // Y ~ Bernoulli(beta X), X equidistant on [0, 2], beta in (0, 1/2]
  logistic_bias,
};

// Quasi-likelihood used to fit data from a generator.
enum class FitFamily { gaussian_linear, bernoulli_glm };

inline std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::polynomial_gaussian: return "polynomial_gaussian";
    case Generator::polynomial_laplace_hetero: return "polynomial_laplace_hetero";
    case Generator::sin_bias_laplace: return "sin_bias_laplace";
    case Generator::logistic_bias: return "logistic_bias";
  }
  return "unknown";
}

inline Generator parse_generator(std::string_view name) {
  if (name == "polynomial_gaussian") return Generator::polynomial_gaussian;
  if (name == "polynomial_laplace_hetero") return Generator::polynomial_laplace_hetero;
  if (name == "sin_bias_laplace") return Generator::sin_bias_laplace;
  if (name == "logistic_bias") return Generator::logistic_bias;
  throw std::invalid_argument("unknown generator '" + std::string(name) + "'");
}

inline std::string_view to_string(FitFamily f) {
  return f == FitFamily::gaussian_linear ? "gaussian_linear" : "bernoulli_glm";
}

inline FitFamily parse_fit_family(std::string_view name) {
  if (name == "gaussian_linear") return FitFamily::gaussian_linear;
  if (name == "bernoulli_glm") return FitFamily::bernoulli_glm;
  throw std::invalid_argument("unknown fit family '" + std::string(name) + "'");
}

// Points a, a + h, ..., b with h = (b - a) / (n - 1); {a} when n = 1.
inline Eigen::VectorXd equidistant(double a, double b, std::size_t n) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x(static_cast<Eigen::Index>(i)) =
        n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return x;
}

// Rows (1, x_i, ..., x_i^{p-1}).
inline Eigen::MatrixXd polynomial_design(const Eigen::VectorXd& x, std::size_t p) {
  Eigen::MatrixXd psi(x.size(), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double power = 1.0;
    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
      psi(i, j) = power;
      power *= x(i);
    }
  }
  return psi;
}

// A known simulation law together with the quasi-likelihood fitted to it and
// the resulting target theta* = argmax E L(theta).
class TrueModelSpec {
 public:
  static TrueModelSpec polynomial_gaussian(std::size_t n, std::size_t p) {
    return TrueModelSpec(Generator::polynomial_gaussian, n, p, 0.0, FitFamily::gaussian_linear);
  }
  static TrueModelSpec polynomial_laplace_hetero(std::size_t n, std::size_t p) {
    return TrueModelSpec(Generator::polynomial_laplace_hetero, n, p, 0.0, FitFamily::gaussian_linear);
  }
  static TrueModelSpec sin_bias_laplace(std::size_t n, double beta) {
    return TrueModelSpec(Generator::sin_bias_laplace, n, 1, beta, FitFamily::gaussian_linear);
  }
  static TrueModelSpec logistic_bias(std::size_t n, double beta, std::size_t p = 1) {
    return TrueModelSpec(Generator::logistic_bias, n, p, beta, FitFamily::bernoulli_glm);
  }

  static FitFamily natural_family(Generator g) {
    return g == Generator::logistic_bias ? FitFamily::bernoulli_glm : FitFamily::gaussian_linear;
  }

  // Same law with a different quasi-likelihood; theta* is recomputed.
  TrueModelSpec with_fit_family(FitFamily family) const {
    return TrueModelSpec(generator_, n_, p_, beta_, family);
  }
  TrueModelSpec with_beta(double beta) const { return TrueModelSpec(generator_, n_, p_, beta, fit_); }

  Generator generator() const noexcept { return generator_; }
  FitFamily fit_family() const noexcept { return fit_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return p_; }
  double beta() const noexcept { return beta_; }
  const Theta& theta_star() const noexcept { return theta_star_; }

  Eigen::VectorXd design_points() const {
    switch (generator_) {
      case Generator::sin_bias_laplace: return equidistant(0.0, 2.0 * std::numbers::pi, n_);
      case Generator::logistic_bias: return equidistant(0.0, 2.0, n_);
      default: return equidistant(0.0, 1.0, n_);
    }
  }

  Eigen::MatrixXd design() const { return polynomial_design(design_points(), p_); }

  // E Y_i
  Eigen::VectorXd means() const {
    const Eigen::VectorXd x = design_points();
    switch (generator_) {
      case Generator::polynomial_gaussian:
      case Generator::polynomial_laplace_hetero:
        return design() * Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p_));
      case Generator::sin_bias_laplace: return beta_ * x.array().sin();
      case Generator::logistic_bias: return beta_ * x;
    }
    return {};
  }

  // Var Y_i
  Eigen::VectorXd variances() const {
    const auto n = static_cast<Eigen::Index>(n_);
    switch (generator_) {
      case Generator::polynomial_gaussian:
      case Generator::sin_bias_laplace: return Eigen::VectorXd::Ones(n);
      case Generator::polynomial_laplace_hetero: {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = noise_scale(static_cast<std::size_t>(i) + 1);
          v(i) = s * s;
        }
        return v;
      }
      case Generator::logistic_bias: {
        const Eigen::VectorXd m = means();
        return m.array() * (1.0 - m.array());
      }
    }
    return {};
  }

  // sigma_i for 1-based i in the heteroscedastic generator.
  static double noise_scale(std::size_t i) { return 0.5 * (4.0 - static_cast<double>(i % 4)); }

  Dataset simulate(std::uint64_t seed) const {
    CounterRng rng(seed);
    const Eigen::VectorXd m = means();
    Eigen::VectorXd y(m.size());
    const double laplace_scale = 1.0 / std::numbers::sqrt2;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    auto laplace = [&] {
      const double a = expo(rng);
      const double b = expo(rng);
      return laplace_scale * (a - b);
    };
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      switch (generator_) {
        case Generator::polynomial_gaussian: y(i) = m(i) + normal(rng); break;
        case Generator::polynomial_laplace_hetero:
          y(i) = m(i) + noise_scale(static_cast<std::size_t>(i) + 1) * laplace();
          break;
        case Generator::sin_bias_laplace: y(i) = m(i) + laplace(); break;
        case Generator::logistic_bias: y(i) = rng.uniform() < m(i) ? 1.0 : 0.0; break;
      }
    }
    return Dataset(std::move(y), design());
  }

  Model fit_model(Dataset data) const {
    if (fit_ == FitFamily::gaussian_linear) return Model(GaussianLinear{}, std::move(data));
    return Model(BernoulliGlm{}, std::move(data));
  }

 private:
  TrueModelSpec(Generator g, std::size_t n, std::size_t p, double beta, FitFamily fit)
      : generator_(g), n_(n), p_(p), beta_(beta), fit_(fit) {
    if (n_ < 1) throw std::invalid_argument("generator: n must be positive");
    if (p_ < 1) throw std::invalid_argument("generator: p must be positive");
    if (g == Generator::sin_bias_laplace && p_ != 1) {
      throw std::invalid_argument("sin_bias_laplace: constant regression, p must be 1");
    }
    if (g == Generator::sin_bias_laplace && !(beta_ >= 0.0 && std::isfinite(beta_))) {
      throw std::invalid_argument("sin_bias_laplace: beta must be finite and nonnegative");
    }
    if (g == Generator::logistic_bias && !(beta_ > 0.0 && beta_ <= 0.5)) {
      throw std::invalid_argument("logistic_bias: beta must lie in (0, 1/2]");
    }
    if (fit_ == FitFamily::bernoulli_glm && g != Generator::logistic_bias) {
      throw std::invalid_argument(std::string(to_string(g)) + ": responses are not binary");
    }
    theta_star_ = compute_theta_star();
  }

  Theta compute_theta_star() const {
    const auto p = static_cast<Eigen::Index>(p_);
    if (fit_ == natural_family(generator_)) {
      switch (generator_) {
        case Generator::polynomial_gaussian:
        case Generator::polynomial_laplace_hetero: return Theta::Ones(p);
        case Generator::sin_bias_laplace: return Theta::Zero(1);
        case Generator::logistic_bias:
          if (p_ == 1) return Theta::Constant(1, std::log(beta_ / (1.0 - beta_)));
          break;
      }
    }
    // argmax E L = MLE of the expected responses (the score is linear in y)
    Dataset expected(means(), design());
    if (fit_ == FitFamily::gaussian_linear) return fit_mle(Model(GaussianLinear{}, expected)).theta_hat;
    return fit_mle(Model(GlmCanonical{GlmLink::binomial()}, expected)).theta_hat;
  }

  Generator generator_;
  std::size_t n_;
  std::size_t p_;
  double beta_;
  FitFamily fit_;
  Theta theta_star_;
};

}  // namespace mboot
