#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "trifuse/dense.hpp"
#include "trifuse/rng.hpp"
#include "trifuse/tape.hpp"

namespace trifuse {

// A checkable differentiable operation: a forward builder over tape vars
// (the tape closure supplies the matching vjp) plus an input sampler that
// respects the op's domain (e.g. keeps points away from activation kinks).
struct DifferentiableOp {
  std::string name;
  std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)> apply;
  std::function<std::vector<DenseMatrix>(Rng&)> sample_inputs;
};

struct GradCheckResult {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
};

// All tape primitives plus the loss compositions used by the model.
const std::vector<DifferentiableOp>& op_registry();

// Compares tape gradients against central finite differences on `trials`
// sampled inputs. Non-scalar outputs are contracted with a fixed random
// probe. Relative error uses max(|analytic|, |numeric|, 1) as denominator.
GradCheckResult finite_diff_check(const DifferentiableOp& op, Rng& rng,
                                  int trials = 20, double step = 1e-5,
                                  double tol = 1e-4);

// Runs finite_diff_check over the whole registry; one line per op when a
// log stream is given. Returns per-op results.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed,
                                                 std::ostream* log);

}  // namespace trifuse
