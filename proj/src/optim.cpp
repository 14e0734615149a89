#include "trifuse/optim.hpp"

#include <cmath>

#include "trifuse/errors.hpp"

namespace trifuse {

void AdamState::init(const std::vector<ParamRef>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const ParamRef& p : params) {
    m.emplace_back(p.value->rows(), p.value->cols());
    v.emplace_back(p.value->rows(), p.value->cols());
  }
}

void adam_step(std::vector<ParamRef>& params, const std::vector<DenseMatrix>& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw validation_error("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    DenseMatrix& w = *params[i].value;
    const DenseMatrix& g = grads[i];
    if (!w.same_shape(g)) {
      throw validation_error("adam_step: gradient shape " + g.shape_str() +
                             " for parameter " + params[i].name + " " + w.shape_str());
    }
    if (!g.all_finite()) {
      throw numeric_error("adam_step: non-finite gradient for " + params[i].name);
    }
    DenseMatrix& mi = state.m[i];
    DenseMatrix& vi = state.v[i];
    for (std::size_t e = 0; e < w.size(); ++e) {
      const double ge = g.values()[e];
      mi.values()[e] = state.beta1 * mi.values()[e] + (1.0 - state.beta1) * ge;
      vi.values()[e] = state.beta2 * vi.values()[e] + (1.0 - state.beta2) * ge * ge;
      const double mhat = mi.values()[e] / bc1;
      const double vhat = vi.values()[e] / bc2;
      w.values()[e] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace trifuse
