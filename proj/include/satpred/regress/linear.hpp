#pragma once

#include <Eigen/Dense>

#include "satpred/error.hpp"

namespace satpred {

/// y ~ X w + b with an unpenalized intercept.
template <typename Scalar>
struct LinearModel {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector weights;
  Scalar intercept = 0;
  Scalar lambda = 0;
  Eigen::Index rank = 0;
  /// Set when lambda = 0 and the centered design is rank deficient; the
  /// minimum-norm solution was returned.
  bool rank_deficient = false;

  template <typename Derived>
  Vector predict(const Eigen::MatrixBase<Derived>& X) const {
    return (X * weights).array() + intercept;
  }
};

/// Minimizes ||y - X w - b||^2 + lambda ||w||^2. Columns and targets are
/// centered so the intercept is unpenalized. lambda = 0 solves the centered
/// system by complete orthogonal decomposition (minimum norm under rank
/// deficiency); lambda > 0 solves the stacked system [Xc; sqrt(lambda) I] by
/// column-pivoting QR, avoiding the squared condition number of X'X.
template <typename DerivedX, typename DerivedY>
LinearModel<typename DerivedX::Scalar> fit_linear(const Eigen::MatrixBase<DerivedX>& X,
                                                  const Eigen::MatrixBase<DerivedY>& y,
                                                  typename DerivedX::Scalar lambda) {
  using Scalar = typename DerivedX::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 1) throw DataError("fit_linear needs at least one row");
  if (y.size() != n) throw DataError("fit_linear: X and y disagree in length");
  if (!(lambda >= Scalar(0))) throw ConfigError("ridge lambda must be >= 0");
  if (!X.allFinite() || !y.allFinite()) throw DataError("fit_linear: non-finite input");

  const Vector x_mean = X.colwise().mean().transpose();
  const Scalar y_mean = y.mean();
  const Matrix Xc = X.rowwise() - x_mean.transpose();
  const Vector yc = y.array() - y_mean;

  LinearModel<Scalar> model;
  model.lambda = lambda;
  if (p == 0) {
    model.weights = Vector::Zero(0);
  } else if (lambda == Scalar(0)) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Xc);
    model.weights = cod.solve(yc);
    model.rank = cod.rank();
    model.rank_deficient = model.rank < p;
  } else {
    Matrix A(n + p, p);
    A.topRows(n) = Xc;
    A.bottomRows(p) = Matrix::Identity(p, p) * std::sqrt(lambda);
    Vector rhs = Vector::Zero(n + p);
    rhs.head(n) = yc;
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    model.weights = qr.solve(rhs);
    model.rank = qr.rank();
  }
  model.intercept = y_mean - x_mean.dot(model.weights);
  return model;
}

}  // namespace satpred
