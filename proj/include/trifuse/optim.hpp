#pragma once

#include <string>
#include <vector>

#include "trifuse/dense.hpp"

namespace trifuse {

// Named handle to one trainable matrix.
struct ParamRef {
  std::string name;
  DenseMatrix* value;
};

// Adam with bias correction; moments are index-aligned with the parameter
// list they were initialized from.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<DenseMatrix> m, v;

  void init(const std::vector<ParamRef>& params);
};

// One bias-corrected Adam update over all parameters. Throws numeric_error
// naming the parameter if its gradient is non-finite.
void adam_step(std::vector<ParamRef>& params, const std::vector<DenseMatrix>& grads,
               AdamState& state, double lr);

}  // namespace trifuse
