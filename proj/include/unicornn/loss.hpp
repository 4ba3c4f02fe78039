#pragma once

#include "unicornn/common.hpp"

namespace unicornn {

struct LossResult {
  double value = 0.0;
  Mat g_pred;  // dE/dpred, same shape as pred
};

// Mean over time steps of half squared error:
//   E = (1/N) * sum_n 0.5 * |pred_n - target_n|^2
// so g_pred = (pred - target) / N.
LossResult mse_loss(const Mat& pred, const Mat& target);

// Softmax cross entropy for one sample, stabilized through log-sum-exp so
// large logits never overflow. g_pred = softmax(logits) - onehot(label).
LossResult cross_entropy_loss(const Vec& logits, Index label);

// Pooled normalized root mean squared error over all entries:
//   sqrt(mean((pred - target)^2)) / sqrt(mean(target^2)).
// Throws std::domain_error when the target is identically zero.
double nrmse(const Mat& pred, const Mat& target);

}  // namespace unicornn
