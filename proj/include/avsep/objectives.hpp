// include/avsep/objectives.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//
// Training objectives: complex-mask regression, the face-voice triplet
// losses, their weighted combination, and the permutation-invariant
// baseline loss.

#ifndef AVSEP_OBJECTIVES_HPP_
#define AVSEP_OBJECTIVES_HPP_

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "avsep/dsp.hpp"
#include "avsep/error.hpp"
#include "avsep/tensor.hpp"

namespace avsep {

struct LossWeights {
  double lambda1 = 0.01;  // cross-modal matching weight
  double lambda2 = 0.01;  // speaker consistency weight
  double margin = 0.5;
  bool use_mask = true;
  bool use_cross_modal = true;
  bool use_consistency = true;
  // per-mask reduction: mean over components (default) or plain sum
  bool sum_reduction = false;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0) throw InvalidInput("loss weights must be >= 0");
    if (margin < 0) throw InvalidInput("margin must be >= 0");
  }
};

struct LossBreakdown {
  double mask_prediction = 0.0;
  double cross_modal = 0.0;
  double consistency = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const {
    return {{"mask_prediction", mask_prediction},
            {"cross_modal", cross_modal},
            {"consistency", consistency},
            {"total", total}};
  }
};

namespace detail {

inline void check_unit(const Tensor& v, const char* what, double tol = 1e-4) {
  double s = 0.0;
  for (long i = 0; i < v.numel(); ++i) s += v[i] * v[i];
  if (std::abs(std::sqrt(s) - 1.0) > tol)
    throw InvalidInput(std::string(what) + ": embedding is not unit-norm (|v| = " +
                       std::to_string(std::sqrt(s)) + ")");
}

}  // namespace detail

// D(a, b) = 1 - <a, b> for unit vectors; range [0, 2].
inline double cosine_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("cosine_distance: dim mismatch");
  detail::check_unit(a, "cosine_distance");
  detail::check_unit(b, "cosine_distance");
  double dot = 0.0;
  for (long i = 0; i < a.numel(); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

// max{0, D(a, p) - D(a, n) + m}; the subgradient at the hinge boundary is
// taken on the inactive side.
inline double triplet_loss(const Tensor& anchor, const Tensor& pos,
                           const Tensor& neg, double margin) {
  const double d_pos = cosine_distance(anchor, pos);
  const double d_neg = cosine_distance(anchor, neg);
  return std::max(0.0, d_pos - d_neg + margin);
}

struct TripletGrad {
  double loss = 0.0;
  Tensor d_anchor, d_pos, d_neg;
  bool active = false;
};

// Gradient form used by the trainer; inputs are trusted unit vectors.
inline TripletGrad triplet_loss_grad(const Tensor& anchor, const Tensor& pos,
                                     const Tensor& neg, double margin) {
  TripletGrad out;
  double dot_p = 0.0, dot_n = 0.0;
  for (long i = 0; i < anchor.numel(); ++i) {
    dot_p += anchor[i] * pos[i];
    dot_n += anchor[i] * neg[i];
  }
  const double hinge = (1.0 - dot_p) - (1.0 - dot_n) + margin;
  out.d_anchor = Tensor(anchor.shape());
  out.d_pos = Tensor(anchor.shape());
  out.d_neg = Tensor(anchor.shape());
  if (hinge > 0.0) {
    out.loss = hinge;
    out.active = true;
    // dD(a,p)/da = -p, dD(a,p)/dp = -a; the negative term enters with -1
    for (long i = 0; i < anchor.numel(); ++i) {
      out.d_anchor[i] = neg[i] - pos[i];
      out.d_pos[i] = -anchor[i];
      out.d_neg[i] = anchor[i];
    }
  }
  return out;
}

// Mean (or sum) of squared component errors for one mask pair.
inline double mask_pair_loss(const ComplexMask& pred, const ComplexMask& gt,
                             bool sum_reduction = false) {
  check_same_shape(pred.real, gt.real, "mask_pair_loss");
  check_same_shape(pred.imag, gt.imag, "mask_pair_loss");
  double acc = 0.0;
  for (long i = 0; i < pred.real.numel(); ++i) {
    const double dr = pred.real[i] - gt.real[i];
    const double di = pred.imag[i] - gt.imag[i];
    acc += dr * dr + di * di;
  }
  if (!sum_reduction) acc /= static_cast<double>(2 * pred.real.numel());
  return acc;
}

// d(loss)/d(pred) as (2, F, T) channel layout matching the network output.
inline Tensor mask_pair_loss_grad(const ComplexMask& pred, const ComplexMask& gt,
                                  bool sum_reduction = false) {
  const long f = pred.real.dim(0), t = pred.real.dim(1);
  Tensor g({2, f, t});
  const double scale =
      sum_reduction ? 2.0 : 2.0 / static_cast<double>(2 * pred.real.numel());
  for (long i = 0; i < pred.real.numel(); ++i) {
    g[i] = scale * (pred.real[i] - gt.real[i]);
    g[f * t + i] = scale * (pred.imag[i] - gt.imag[i]);
  }
  return g;
}

// Summed over the four (prediction, ground-truth) pairs of the two-mixture
// sample.
inline double mask_prediction_loss(const std::array<ComplexMask, 4>& pred,
                                   const std::array<ComplexMask, 4>& gt,
                                   bool sum_reduction = false) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) acc += mask_pair_loss(pred[static_cast<std::size_t>(i)],
                                                    gt[static_cast<std::size_t>(i)],
                                                    sum_reduction);
  return acc;
}

// L_t(aA1, iA, iB) + L_t(aA2, iA, iB) + L_t(aB1, iB, iA) + L_t(aB2, iB, iA)
inline double cross_modal_loss(const Tensor& aA1, const Tensor& aA2,
                               const Tensor& aB1, const Tensor& aB2,
                               const Tensor& iA, const Tensor& iB, double margin) {
  return triplet_loss(aA1, iA, iB, margin) + triplet_loss(aA2, iA, iB, margin) +
         triplet_loss(aB1, iB, iA, margin) + triplet_loss(aB2, iB, iA, margin);
}

// L_t(aA1, aA2, aB1) + L_t(aA1, aA2, aB2)
inline double consistency_loss(const Tensor& aA1, const Tensor& aA2,
                               const Tensor& aB1, const Tensor& aB2,
                               double margin) {
  return triplet_loss(aA1, aA2, aB1, margin) + triplet_loss(aA1, aA2, aB2, margin);
}

// Weighted combination with ablation flags; disabled terms report zero.
inline LossBreakdown total_loss(double mask_part, double cross_part,
                                double consistency_part, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.mask_prediction = w.use_mask ? mask_part : 0.0;
  b.cross_modal = w.use_cross_modal ? cross_part : 0.0;
  b.consistency = w.use_consistency ? consistency_part : 0.0;
  auto check = [](double v, const char* name) {
    if (std::isnan(v))
      throw NumericalError(std::string("total_loss: NaN in ") + name);
  };
  check(b.mask_prediction, "mask_prediction");
  check(b.cross_modal, "cross_modal");
  check(b.consistency, "consistency");
  b.total = b.mask_prediction + w.lambda1 * b.cross_modal + w.lambda2 * b.consistency;
  return b;
}

// Minimum over assignments of predictions to references of the summed mask
// terms; at most 3 sources (factorial search). Returns the argmin
// permutation: perm[i] is the reference paired with prediction i.
inline std::pair<double, std::vector<int>> pit_mask_loss(
    const std::vector<ComplexMask>& preds, const std::vector<ComplexMask>& gts,
    bool sum_reduction = false) {
  if (preds.size() != gts.size())
    throw ShapeError("pit_mask_loss: prediction/reference count mismatch");
  if (preds.empty() || preds.size() > 3)
    throw InvalidInput("pit_mask_loss: 1 to 3 sources supported");
  const int n = static_cast<int>(preds.size());

  // pairwise costs
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                        std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          mask_pair_loss(preds[static_cast<std::size_t>(i)],
                         gts[static_cast<std::size_t>(j)], sum_reduction);

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = 1e300;
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i)
      c += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_cost, best};
}

}  // namespace avsep

#endif  // AVSEP_OBJECTIVES_HPP_
