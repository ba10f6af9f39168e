// tests/support/gradcheck.hpp
//
// Central finite-difference gradient checking for layers and models.

#ifndef AVSEP_TESTS_SUPPORT_GRADCHECK_HPP_
#define AVSEP_TESTS_SUPPORT_GRADCHECK_HPP_

#include <cmath>
#include <functional>

#include "avsep/nn.hpp"
#include "avsep/rng.hpp"
#include "avsep/tensor.hpp"

namespace gradcheck {

// Scalar loss = <proj, f(x)> for a fixed random projection; analytic input
// and parameter gradients are compared against central differences.
struct LayerCheckResult {
  double max_rel_input = 0.0;
  double max_rel_param = 0.0;
};

inline double rel_err(double a, double b, double floor = 1e-6) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

// Central difference of `loss` along one slot, compared against the
// analytic value. Tries an epsilon ladder and keeps the best agreement:
// larger steps suppress roundoff in the loss difference, smaller steps make
// crossing a piecewise-linear kink (ReLU/hinge) unlikely; a genuine
// gradient bug keeps its error at every step size. The floor keeps the
// comparison meaningful for parameters whose true gradient is ~0 (e.g. a
// conv bias absorbed by a following normalization), where finite
// differences measure nothing but cancellation noise.
template <typename LossFn>
double fd_rel_err(LossFn&& loss, double* slot, double analytic,
                  double floor = 1e-6, double tol_early = 1e-4) {
  const double keep = *slot;
  double best = 1e300;
  for (double eps : {1e-4, 1e-5, 1.2e-6, 2.3e-7}) {
    *slot = keep + eps;
    const double lp = loss();
    *slot = keep - eps;
    const double lm = loss();
    *slot = keep;
    best = std::min(best, rel_err((lp - lm) / (2.0 * eps), analytic, floor));
    if (best < tol_early) break;
  }
  return best;
}

inline LayerCheckResult check_layer(avsep::nn::Layer& layer,
                                    avsep::nn::ParamStore& store,
                                    const avsep::Tensor& x0, uint64_t seed,
                                    double eps = 1e-6, long max_params = 64,
                                    long max_inputs = 64) {
  using avsep::Tensor;
  using namespace avsep::nn;
  avsep::Rng rng(seed);

  Tape tape;
  Tensor y0 = layer.forward(x0, tape);
  Tensor proj(y0.shape());
  for (long i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1.0, 1.0);

  auto loss_at = [&](const Tensor& x) {
    Tape t2;
    Tensor y = layer.forward(x, t2);
    double acc = 0.0;
    for (long i = 0; i < y.numel(); ++i) acc += proj[i] * y[i];
    return acc;
  };

  // analytic
  Grads grads(store);
  Tensor dx = layer.backward(proj, tape, grads);

  LayerCheckResult res;

  // input gradient
  Tensor x = x0;
  const long stride_in = std::max(1L, x.numel() / max_inputs);
  for (long i = 0; i < x.numel(); i += stride_in) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double lp = loss_at(x);
    x[i] = keep - eps;
    const double lm = loss_at(x);
    x[i] = keep;
    const double fd = (lp - lm) / (2.0 * eps);
    res.max_rel_input = std::max(res.max_rel_input, rel_err(fd, dx[i]));
  }

  // parameter gradients
  for (std::size_t pi = 0; pi < store.values.size(); ++pi) {
    Tensor& p = store.values[pi];
    const long stride = std::max(1L, p.numel() / max_params);
    for (long i = 0; i < p.numel(); i += stride) {
      const double keep = p[i];
      p[i] = keep + eps;
      const double lp = loss_at(x0);
      p[i] = keep - eps;
      const double lm = loss_at(x0);
      p[i] = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      res.max_rel_param = std::max(res.max_rel_param, rel_err(fd, grads.g[pi][i]));
    }
  }
  return res;
}

inline avsep::Tensor random_tensor(std::vector<long> shape, uint64_t seed,
                                   double lo = -1.0, double hi = 1.0) {
  avsep::Tensor t(std::move(shape));
  avsep::Rng rng(seed);
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace gradcheck

#endif  // AVSEP_TESTS_SUPPORT_GRADCHECK_HPP_
