#pragma once

// Central finite-difference gradient oracle, run in double precision.
// Independent of Network::backward: it only calls the forward pass.

#include <cmath>
#include <vector>

#include "pnpe/network.hpp"
#include "pnpe/training.hpp"

namespace oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

inline double loss_of(const pnpe::Network<double>& net, const pnpe::Tensor3<double>& x,
                      const pnpe::Tensor3<double>& targets) {
  const pnpe::Tensor3<double> logits = net.forward(x);
  return pnpe::cce_loss(logits, targets);
}

// Compares every analytic parameter gradient against (L(t+h) - L(t-h)) / 2h.
// Relative error uses max(|analytic|, |numeric|) as the denominator; pairs
// that are both below floor count as zero error (dead paths).
inline GradCheckResult gradcheck(pnpe::Network<double>& net, const pnpe::Tensor3<double>& x,
                                 const pnpe::Tensor3<double>& targets, double h = 1e-3,
                                 double floor = 1e-7) {
  typename pnpe::Network<double>::Cache cache;
  const pnpe::Tensor3<double> logits = net.forward(x, &cache);
  pnpe::Tensor3<double> dlogits;
  pnpe::cce_loss_backward(logits, targets, dlogits);
  std::vector<double> grad(net.weights().size(), 0.0);
  net.backward(cache, dlogits, grad);

  GradCheckResult result;
  std::vector<double>& theta = net.weights();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = loss_of(net, x, targets);
    theta[i] = saved - h;
    const double down = loss_of(net, x, targets);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(std::abs(grad[i]), std::abs(numeric));
    const double rel = denom < floor ? 0.0 : std::abs(grad[i] - numeric) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
      result.analytic_at_worst = grad[i];
      result.numeric_at_worst = numeric;
    }
  }
  return result;
}

}  // namespace oracle
