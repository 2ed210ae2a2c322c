// SPDX-License-Identifier: Apache-2.0
//
// Reparameterizable base distributions: factored Gaussian and factored
// Exponential. Samples are deterministic differentiable functions of the
// parameters and a standardized noise draw, so gradients flow into the
// parameters and never into the noise. Batches are rows; dimensions are
// columns; log-probabilities come back as a (B x 1) column.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "softrl/autodiff.hpp"
#include "softrl/tensor.hpp"

namespace softrl {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogRateMin = -10.0;
inline constexpr double kLogRateMax = 5.0;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 log(2 pi)

struct GaussianParams {
  DiffNode mean;     // B x D
  DiffNode log_std;  // B x D, clamped into [kLogStdMin, kLogStdMax]
};

struct ExponentialParams {
  DiffNode log_rate;  // B x D, clamped into [kLogRateMin, kLogRateMax]
  DiffNode location;  // B x D
};

inline GaussianParams make_gaussian_params(DiffNode mean, DiffNode raw_log_std) {
  return GaussianParams{mean, clamp(raw_log_std, kLogStdMin, kLogStdMax)};
}

inline ExponentialParams make_exponential_params(DiffNode raw_log_rate,
                                                 DiffNode location) {
  return ExponentialParams{clamp(raw_log_rate, kLogRateMin, kLogRateMax),
                           location};
}

// mean + exp(log_std) * eps, with eps a constant draw from N(0, I).
inline DiffNode gaussian_rsample(const GaussianParams& p, DiffNode eps) {
  return p.mean + exp(p.log_std) * eps;
}

// Sum over dimensions of -0.5 log(2 pi) - log_std - (x - mean)^2 / (2 std^2),
// written with exp(-2 log_std) so it stays inside the primitive set.
inline DiffNode gaussian_log_prob(const GaussianParams& p, DiffNode x) {
  DiffNode delta = x - p.mean;
  DiffNode quad = square(delta) * exp(p.log_std * -2.0) * 0.5;
  return row_sum(-quad - p.log_std - kHalfLog2Pi);
}

// location + (-log(1 - u)) / rate via inverse CDF, with u a constant draw
// from the open interval (0, 1).
inline DiffNode exponential_rsample(const ExponentialParams& p, DiffNode u) {
  const Tensor& uv = u.value();
  for (double v : uv.data)
    if (!(v > 0.0 && v < 1.0))
      throw std::invalid_argument("exponential_rsample: u outside (0,1)");
  Tape& t = *u.tape;
  DiffNode neg_log1mu = -t.log(1.0 - u);
  return p.location + neg_log1mu * exp(-p.log_rate);
}

// Sum over dimensions of log rate - rate (x - location) for x >= location;
// -infinity when any coordinate falls below the location (zero density).
// The support test is made on values, so a -infinity result is a constant
// node carrying no gradient.
inline DiffNode exponential_log_prob(const ExponentialParams& p, DiffNode x) {
  const Tensor& xv = x.value();
  const Tensor& lv = p.location.value();
  Tape& t = *x.tape;
  bool in_support = true;
  Tensor support(xv.rows, 1);
  for (int r = 0; r < xv.rows; ++r) {
    double ok = 0.0;
    for (int c = 0; c < xv.cols; ++c)
      if (xv.at(r, c) < lv.at(r, c)) ok = -std::numeric_limits<double>::infinity();
    support[r] = ok;
    if (ok != 0.0) in_support = false;
  }
  DiffNode lp = row_sum(p.log_rate - exp(p.log_rate) * (x - p.location));
  if (in_support) return lp;
  return lp + t.constant(std::move(support));
}

// Monte Carlo entropy: minus the mean of log-probabilities of fresh samples.
inline double entropy_mc(const std::vector<double>& log_probs) {
  if (log_probs.empty())
    throw std::invalid_argument("entropy_mc: empty log-prob list");
  double s = 0.0;
  for (double lp : log_probs) s += lp;
  return -s / static_cast<double>(log_probs.size());
}

}  // namespace softrl
