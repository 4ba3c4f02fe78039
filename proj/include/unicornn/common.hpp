#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace unicornn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Arr = Eigen::ArrayXd;
using ArrXX = Eigen::ArrayXXd;
using Index = Eigen::Index;

// Indexing convention used throughout: a sequence of N steps stores step n
// (1-based) in column n-1 of its input/output matrices; state trajectories
// carry N+1 columns with the initial state in column 0.

// Raised when a run leaves the finite regime (loss divergence, blown-up state
// reconstruction). The CLI maps this to a dedicated exit code.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named view over one parameter tensor's flat storage. Optimizers, the
// checkpoint writer and the finite-difference oracle all walk these.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Index size = 0;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace unicornn
