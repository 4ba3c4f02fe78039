#include "unicornn/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace unicornn {

LossResult mse_loss(const Mat& pred, const Mat& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "mse_loss: pred and target shapes differ");
  require(pred.cols() >= 1, "mse_loss: empty prediction");
  const double n = static_cast<double>(pred.cols());
  LossResult out;
  out.g_pred = (pred - target) / n;
  out.value = 0.5 * (pred - target).squaredNorm() / n;
  return out;
}

LossResult cross_entropy_loss(const Vec& logits, Index label) {
  const Index k = logits.size();
  require(k >= 2, "cross_entropy_loss: need at least two classes");
  require(label >= 0 && label < k, "cross_entropy_loss: label out of range");
  const double mx = logits.maxCoeff();
  const Arr shifted = logits.array() - mx;
  const double sum_exp = shifted.exp().sum();
  LossResult out;
  out.value = mx + std::log(sum_exp) - logits[label];
  out.g_pred = (shifted.exp() / sum_exp).matrix();
  out.g_pred(label, 0) -= 1.0;
  return out;
}

double nrmse(const Mat& pred, const Mat& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "nrmse: pred and target shapes differ");
  require(pred.size() >= 1, "nrmse: empty prediction");
  const double denom_sq = target.array().square().mean();
  if (denom_sq == 0.0)
    throw std::domain_error("nrmse: target is identically zero");
  const double err_sq = (pred - target).array().square().mean();
  return std::sqrt(err_sq) / std::sqrt(denom_sq);
}

}  // namespace unicornn
