#pragma once

// Concordance correlation coefficient and the mini-batch CCC loss.

#include "tgeat/error.hpp"
#include "tgeat/types.hpp"

#include <cmath>
#include <span>

namespace tgeat {

struct CccTerms {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;  // population
  double var_y = 0.0;
  double cov_xy = 0.0;

  double denominator() const { return var_x + var_y + (mean_x - mean_y) * (mean_x - mean_y); }
};

inline constexpr double kCccDegenerate = 1e-12;

template <typename DerivedX, typename DerivedY>
CccTerms ccc_terms(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::validation, "ccc: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) fail(ErrorKind::validation, "ccc: need at least 2 values");
  const auto xd = x.derived().template cast<double>().array().eval();
  const auto yd = y.derived().template cast<double>().array().eval();
  CccTerms t;
  t.mean_x = xd.mean();
  t.mean_y = yd.mean();
  const auto cx = (xd - t.mean_x).eval();
  const auto cy = (yd - t.mean_y).eval();
  t.var_x = cx.square().mean();
  t.var_y = cy.square().mean();
  t.cov_xy = (cx * cy).mean();
  return t;
}

// 2 cov / (var_x + var_y + (mean_x - mean_y)^2). A vanishing denominator
// means both sequences are constant with equal means: 1 when they agree
// elementwise, else 0.
template <typename DerivedX, typename DerivedY>
double ccc(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  const CccTerms t = ccc_terms(x, y);
  const double denom = t.denominator();
  if (denom < kCccDegenerate) {
    const double gap = (x.derived().template cast<double>() - y.derived().template cast<double>()).cwiseAbs().maxCoeff();
    return gap <= kCccDegenerate ? 1.0 : 0.0;
  }
  return 2.0 * t.cov_xy / denom;
}

inline double ccc(std::span<const double> x, std::span<const double> y) {
  using Map = Eigen::Map<const Vector<double>>;
  return ccc(Map(x.data(), static_cast<Eigen::Index>(x.size())), Map(y.data(), static_cast<Eigen::Index>(y.size())));
}

// Sum over attributes (columns) of 1 - CCC on batch statistics. When `grad`
// is given it receives d(loss)/d(pred); columns with a degenerate
// denominator contribute zero gradient.
template <typename Scalar>
Scalar ccc_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target, Matrix<Scalar>* grad = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    fail(ErrorKind::validation, "ccc_loss: prediction and target shapes differ");
  }
  if (pred.rows() < 2) fail(ErrorKind::validation, "ccc_loss: need a batch of at least 2");
  const auto n = static_cast<double>(pred.rows());
  if (grad) grad->setZero(pred.rows(), pred.cols());
  double loss = 0.0;
  for (Eigen::Index a = 0; a < pred.cols(); ++a) {
    const CccTerms t = ccc_terms(pred.col(a), target.col(a));
    const double denom = t.denominator();
    if (denom < kCccDegenerate) {
      loss += 1.0 - ccc(pred.col(a), target.col(a));
      continue;
    }
    loss += 1.0 - 2.0 * t.cov_xy / denom;
    if (grad) {
      const auto x = pred.col(a).template cast<double>().array();
      const auto y = target.col(a).template cast<double>().array();
      // d ccc / d x_i = 2/(n D) * [(y_i - my) - ccc * ((x_i - mx) + (mx - my))]
      const double c = 2.0 * t.cov_xy / denom;
      const auto dccc = (2.0 / (n * denom)) * ((y - t.mean_y) - c * ((x - t.mean_x) + (t.mean_x - t.mean_y)));
      grad->col(a) = (-dccc).template cast<Scalar>().matrix();
    }
  }
  return static_cast<Scalar>(loss);
}

}  // namespace tgeat
