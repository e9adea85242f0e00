#pragma once

#include <cstddef>
#include <string>

#include "ptpmm/delay_models.hpp"
#include "ptpmm/exchange.hpp"
#include "ptpmm/quadrature.hpp"

namespace ptpmm {

enum class Scheme { kGmle, kLmle, kMinimaxK, kMinimaxS };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& name);  // gmle, lmle, minimax-k, minimax-s

struct Diagnostics {
  bool converged = true;
  std::size_t evaluations = 0;
  double quad_rel_error = 0.0;  // minimax only
  bool quad_warning = false;
  double log_likelihood = 0.0;  // LMLE only, at the returned point
};

struct Estimate {
  double phi_hat = 1.0;
  double delta_hat = 0.0;  // s
  Scheme scheme = Scheme::kGmle;
  Diagnostics diagnostics;
};

// Least squares of [t2, t3] on [t1 + d_ms + mean_delay, t4 - d_sm - mean_delay]
// with a common intercept. Needs P >= 2.
Estimate gmle(const TimestampSet& ts, double d_ms, double d_sm, double mean_delay);

struct LmleConfig {
  double step_s = 0.1;           // initial step in log phi
  double step_delta_scale = 5.0; // initial delta step, in delay-model stddevs
  double contraction = 0.5;
  double rel_stop = 1e-12;
  std::size_t max_evaluations = 200000;
};

// Pattern search on (log phi, delta) from the GMLE point. Candidates whose
// delta leaves the feasible set at their phi are pulled back into it, so the
// search can slide along the edges of a limited-support likelihood.
Estimate lmle(const TimestampSet& ts, double d_ms, double d_sm, const DelayModel& fwd,
              const DelayModel& rev, const LmleConfig& cfg = {});

inline constexpr double kMinimaxKTol = 1e-6;
inline constexpr double kMinimaxSTol = 1e-5;

quad::QuadConfig default_quad_config(Scheme s);

Estimate minimax_k(const TimestampSet& ts, double d_ms, double d_sm, const DelayModel& fwd,
                   const DelayModel& rev, const quad::QuadConfig& cfg);

enum class MinimaxSRoute {
  // Changes variables so that, at each phi, the d and delta integrals split
  // into two independent 1-D integrals.
  kSeparable,
  // Plain nested 3-D quadrature over (log phi, d, delta); slow, for checks on
  // smooth delay models. With histograms the d axis is kinked everywhere and
  // its error estimate is not trustworthy.
  kDirect,
};

Estimate minimax_s(const TimestampSet& ts, const DelayModel& fwd, const DelayModel& rev,
                   const quad::QuadConfig& cfg, MinimaxSRoute route = MinimaxSRoute::kSeparable);

}  // namespace ptpmm
