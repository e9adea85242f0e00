#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ptpmm/delay_models.hpp"

namespace ptpmm::quad {

using LogDensity = std::function<double(std::span<const double>)>;
using Weight = std::function<double(std::span<const double>)>;
// Given the leading coordinates, the interval of the last axis outside which
// the log density is known to be -inf. Lets the integrator put panel edges on
// support boundaries instead of hunting for them.
using InnerSupport = std::function<SupportInterval(std::span<const double>)>;
// Given the leading coordinates and the last-axis interval, appends points
// inside it where the density jumps or kinks (e.g. histogram bin edges).
using InnerBreaks =
    std::function<void(std::span<const double>, const SupportInterval&, std::vector<double>&)>;
// kMidpoint: between consecutive breaks the density is constant along the last
// axis and every weight is affine in it, so one midpoint per piece is exact.
enum class InnerRule { kAdaptive, kMidpoint };

struct QuadConfig {
  // Nodes per axis of the coarse scan used to locate the posterior (odd, >= 9).
  std::size_t grid_points = 33;
  // Extra passes, each doubling the panel budget, when the first pass misses
  // the tolerance.
  std::size_t refinement_passes = 2;
  // The located box is grown until its boundary sits below this fraction of
  // the peak density.
  double mass_tol = 1e-8;
  double rel_tol = 1e-6;
  // Panel budget per axis per 1-D adaptive integral in the first pass.
  std::size_t max_panels = 200;

  void validate() const;
};

struct RatioResult {
  double value = 0.0;
  double log_numerator = -kInf;  // log |numerator mass|
  int numerator_sign = 0;
  double log_denominator = -kInf;
  double rel_error = 0.0;  // worst per-channel error / absolute mass
  std::size_t evaluations = 0;
  bool converged = false;
  bool warning = false;  // rel_error above 100x the target
  std::vector<double> pass_errors;
};

// Adaptive Gauss-Kronrod (7-15) on [a, b] for a vector of channels.
// `f` writes, for each channel, the value at x plus an error and an absolute
// value that are integrated passively (used by nested integrals to carry the
// inner error and |integrand| mass outward).
struct Channels {
  std::vector<double> value, error, absval;
  explicit Channels(std::size_t n = 0) : value(n, 0.0), error(n, 0.0), absval(n, 0.0) {}
  std::size_t size() const noexcept { return value.size(); }
};

using ChannelFn = std::function<void(double x, Channels& out)>;

struct Integral1D {
  Channels result;
  std::size_t evaluations = 0;
  std::size_t panels = 0;
  bool converged = false;
};

// Converged when every channel's error is within rel_tol of its absolute mass.
Integral1D adaptive_gk(const ChannelFn& f, std::size_t channels, double a, double b,
                       double rel_tol, std::size_t max_panels);
// Same, starting from the panels between consecutive `points` (sorted, first
// and last are the limits); max_panels bounds the splits on top of those.
Integral1D adaptive_gk(const ChannelFn& f, std::size_t channels, std::span<const double> points,
                       double rel_tol, std::size_t max_panels);

// Exact for integrands that are affine between consecutive sorted points.
Integral1D piecewise_midpoint(const ChannelFn& f, std::size_t channels,
                              std::span<const double> points);

// Ratios  int w_k exp(log_f) / int w_den exp(log_f)  over a box, one per
// numerator, sharing the denominator. Iterated adaptive quadrature, axis 0
// outermost; all values are scaled by exp(-peak) so nothing overflows.
// outer_breaks are axis-0 points where the integrand kinks.
std::vector<RatioResult> integrate_ratios(const LogDensity& log_f,
                                          const std::vector<Weight>& numerators,
                                          const Weight& denominator,
                                          std::span<const SupportInterval> box,
                                          const QuadConfig& cfg,
                                          const InnerSupport& inner = {},
                                          const InnerBreaks& breaks = {},
                                          InnerRule rule = InnerRule::kAdaptive,
                                          std::span<const double> outer_breaks = {});

RatioResult integrate_ratio(const LogDensity& log_f, const Weight& numerator,
                            const Weight& denominator, std::span<const SupportInterval> box,
                            const QuadConfig& cfg, const InnerSupport& inner = {},
                            const InnerBreaks& breaks = {});

// Grows or shrinks each axis of seed_box until the density on the box
// boundary is below mass_tol times the peak. Callers wanting log-space on an
// axis pass log-coordinates (the estimators integrate over s = log phi).
std::vector<SupportInterval> locate_posterior_box(const LogDensity& log_f,
                                                  std::span<const SupportInterval> seed_box,
                                                  const QuadConfig& cfg,
                                                  const InnerSupport& inner = {});

}  // namespace ptpmm::quad
