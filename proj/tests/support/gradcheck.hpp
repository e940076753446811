#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msui2i/core/autodiff.hpp"
#include "msui2i/core/rng.hpp"

namespace testutil {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  std::string worst;
};

// Central finite differences against analytic gradients for a scalar-valued
// graph builder. `leaves` are the parameters to perturb; `n_samples` entries
// are drawn from each leaf (all entries if n_samples <= 0).
inline GradCheckResult grad_check(
    const std::function<msui2i::Var(const std::vector<msui2i::Var>&)>& build,
    std::vector<msui2i::Var> leaves, double step = 1e-3, int n_samples = -1,
    uint64_t seed = 1234) {
  using namespace msui2i;
  GradCheckResult res;
  Rng rng(seed);

  for (auto& l : leaves) l->zero_grad();
  Var loss = build(leaves);
  backward(loss);

  for (size_t li = 0; li < leaves.size(); ++li) {
    Var& leaf = leaves[li];
    const int64_t n = leaf->value.numel();
    std::vector<int64_t> idxs;
    if (n_samples <= 0 || n_samples >= n) {
      for (int64_t i = 0; i < n; ++i) idxs.push_back(i);
    } else {
      for (int s = 0; s < n_samples; ++s) idxs.push_back(rng.uniform_int(static_cast<int>(n)));
    }
    for (int64_t i : idxs) {
      const double orig = leaf->value[i];
      leaf->value[i] = orig + step;
      const double fp = build(leaves)->value[0];
      leaf->value[i] = orig - step;
      const double fm = build(leaves)->value[0];
      leaf->value[i] = orig;

      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = leaf->has_grad() ? leaf->grad[i] : 0.0;
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-4});
      const double rel = std::fabs(numeric - analytic) / denom;
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "leaf " + std::to_string(li) + " idx " + std::to_string(i) + " numeric " +
                    std::to_string(numeric) + " analytic " + std::to_string(analytic);
      }
    }
  }
  return res;
}

inline msui2i::Tensor random_tensor(std::vector<int> shape, msui2i::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  msui2i::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace testutil
