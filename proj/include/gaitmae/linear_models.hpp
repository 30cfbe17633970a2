#pragma once

// Linear predictors used by the evaluation harness.
//
// Ridge regression standardizes features with train-set statistics, centers
// the target, and solves (X'X + alpha I) beta = X'y; alpha = 0 falls back to
// a rank-revealing least-squares solve. RidgeSweep factorizes one train/test
// split once and then serves any (target, alpha) pair cheaply, switching to
// the Gram (kernel) form when features outnumber samples.
//
// Logistic regression minimizes mean log-loss + alpha/2 * |beta|^2 with a
// damped Newton iteration; the intercept is never penalized.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gaitmae {

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // standard deviation, 1 where a column is constant

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean.transpose()).array().square().colwise().sum() / n)
                  .sqrt()
                  .matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (s.scale[j] <= 0.0) s.scale[j] = 1.0;
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size())
      throw std::invalid_argument("Standardizer: column count mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
  }
};

struct RidgeModel {
  Standardizer standardizer;
  Eigen::VectorXd weights;  // in standardized feature space
  double intercept = 0.0;   // train mean of y

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return (standardizer.apply(x) * weights).array() + intercept;
  }

  // Equivalent coefficients on the raw (unstandardized) feature scale.
  Eigen::VectorXd raw_weights() const {
    return weights.array() / standardizer.scale.array();
  }
  double raw_intercept() const {
    return intercept - raw_weights().dot(standardizer.mean);
  }
};

inline RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            double alpha) {
  if (x.rows() != y.size())
    throw std::invalid_argument("ridge_fit: row count mismatch");
  if (x.rows() < 1) throw std::invalid_argument("ridge_fit: empty training set");
  if (alpha < 0.0) throw std::invalid_argument("ridge_fit: alpha must be >= 0");
  RidgeModel m;
  m.standardizer = Standardizer::fit(x);
  const Eigen::MatrixXd xs = m.standardizer.apply(x);
  m.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - m.intercept;
  if (alpha == 0.0) {
    // Rank-revealing least squares; picks the minimum-norm solution when
    // columns are dependent.
    m.weights = xs.completeOrthogonalDecomposition().solve(yc);
    return m;
  }
  const Eigen::Index p = xs.cols();
  Eigen::MatrixXd gram = xs.transpose() * xs;
  gram.diagonal().array() += alpha;
  m.weights = gram.ldlt().solve(xs.transpose() * yc);
  return m;
}

// One factorization per train/test split, reused across targets and alphas.
// Primal form eigendecomposes X'X (p x p) when p <= n; otherwise the Gram
// form eigendecomposes XX' (n x n) and uses beta = X' (XX' + alpha I)^-1 y,
// which matches the primal solution exactly for alpha > 0.
class RidgeSweep {
 public:
  RidgeSweep(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& x_test) {
    if (x_train.rows() < 1)
      throw std::invalid_argument("RidgeSweep: empty training set");
    std_ = Standardizer::fit(x_train);
    const Eigen::MatrixXd xs = std_.apply(x_train);
    const Eigen::MatrixXd xt = std_.apply(x_test);
    dual_ = xs.cols() > xs.rows();
    if (dual_) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xs * xs.transpose());
      evals_ = es.eigenvalues();
      evecs_ = es.eigenvectors();
      cross_ = xt * xs.transpose();  // test x train Gram
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xs.transpose() * xs);
      evals_ = es.eigenvalues();
      evecs_ = es.eigenvectors();
      xty_proj_ = xs;  // keep standardized train rows for X'y
      xt_ = xt;
    }
  }

  // Predictions on the test rows for one target at one alpha.
  Eigen::VectorXd predict(const Eigen::VectorXd& y_train, double alpha) const {
    if (alpha <= 0.0)
      throw std::invalid_argument("RidgeSweep: alpha must be > 0");
    const double y_mean = y_train.mean();
    const Eigen::VectorXd yc = y_train.array() - y_mean;
    if (dual_) {
      const Eigen::VectorXd a =
          evecs_ * ((evecs_.transpose() * yc).array() /
                    (evals_.array() + alpha))
                       .matrix();
      return (cross_ * a).array() + y_mean;
    }
    const Eigen::VectorXd g = xty_proj_.transpose() * yc;
    const Eigen::VectorXd beta =
        evecs_ *
        ((evecs_.transpose() * g).array() / (evals_.array() + alpha)).matrix();
    return (xt_ * beta).array() + y_mean;
  }

 private:
  Standardizer std_;
  bool dual_ = false;
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
  Eigen::MatrixXd cross_;     // dual: standardized test * train'
  Eigen::MatrixXd xty_proj_;  // primal: standardized train rows
  Eigen::MatrixXd xt_;        // primal: standardized test rows
};

struct LogisticModel {
  Standardizer standardizer;
  Eigen::VectorXd weights;  // in standardized feature space
  double intercept = 0.0;

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const {
    const Eigen::VectorXd z =
        ((standardizer.apply(x) * weights).array() + intercept).matrix();
    Eigen::VectorXd p(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      p[i] = 1.0 / (1.0 + std::exp(-z[i]));
    return p;
  }
};

namespace detail {

// softplus(z) = log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

inline double logistic_objective(const Eigen::MatrixXd& xs,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& beta, double intercept,
                                 double alpha) {
  const Eigen::VectorXd z = ((xs * beta).array() + intercept).matrix();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    loss += softplus(z[i]) - y[i] * z[i];
  loss /= static_cast<double>(z.size());
  return loss + 0.5 * alpha * beta.squaredNorm();
}

}  // namespace detail

inline LogisticModel logistic_fit(const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y, double alpha,
                                  int max_iters = 200) {
  if (x.rows() != y.size())
    throw std::invalid_argument("logistic_fit: row count mismatch");
  if (alpha < 0.0) throw std::invalid_argument("logistic_fit: alpha must be >= 0");
  bool saw0 = false, saw1 = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0)
      saw0 = true;
    else if (y[i] == 1.0)
      saw1 = true;
    else
      throw std::invalid_argument("logistic_fit: labels must be 0 or 1");
  }
  if (!saw0 || !saw1)
    throw std::invalid_argument("logistic_fit: training labels are single-class");

  LogisticModel m;
  m.standardizer = Standardizer::fit(x);
  const Eigen::MatrixXd xs = m.standardizer.apply(x);
  const Eigen::Index n = xs.rows(), p = xs.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double intercept = 0.0;
  double obj = detail::logistic_objective(xs, y, beta, intercept, alpha);

  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd z = ((xs * beta).array() + intercept).matrix();
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = 1.0 / (1.0 + std::exp(-z[i]));
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd resid = prob - y;
    Eigen::VectorXd grad(p + 1);
    grad.head(p) = xs.transpose() * resid * inv_n + alpha * beta;
    grad[p] = resid.sum() * inv_n;
    if (grad.norm() < 1e-8) break;

    Eigen::MatrixXd hess(p + 1, p + 1);
    const Eigen::MatrixXd xw = xs.array().colwise() * w.array();
    hess.topLeftCorner(p, p) = xs.transpose() * xw * inv_n;
    hess.topLeftCorner(p, p).diagonal().array() += alpha;
    hess.topRightCorner(p, 1) = xw.colwise().sum().transpose() * inv_n;
    hess.bottomLeftCorner(1, p) = hess.topRightCorner(p, 1).transpose();
    hess(p, p) = w.sum() * inv_n;
    // Tiny levelling keeps the solve well posed when w underflows.
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    while (t > 1e-10) {
      const Eigen::VectorXd beta_try = beta - t * step.head(p);
      const double icpt_try = intercept - t * step[p];
      const double obj_try =
          detail::logistic_objective(xs, y, beta_try, icpt_try, alpha);
      if (obj_try <= obj) {
        beta = beta_try;
        intercept = icpt_try;
        obj = obj_try;
        break;
      }
      t *= 0.5;
    }
    if (t <= 1e-10) break;  // no descent direction left at double precision
  }

  m.weights = beta;
  m.intercept = intercept;
  return m;
}

// Row-major nested vectors to Eigen, shared by table ingestion code.
inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::invalid_argument("to_matrix: ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace gaitmae
