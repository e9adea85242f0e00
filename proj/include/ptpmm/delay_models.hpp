#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ptpmm/rng.hpp"

namespace ptpmm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Closed interval [lo, hi] of delays in seconds; hi may be +inf.
struct SupportInterval {
  double lo = 0.0;
  double hi = kInf;

  bool contains(double w) const noexcept { return w >= lo && w <= hi; }
  bool empty() const noexcept { return !(lo <= hi); }
  double width() const noexcept { return hi - lo; }
};

SupportInterval intersect(const SupportInterval& a, const SupportInterval& b) noexcept;

struct Exponential {
  double rate;  // 1/s
};

struct Gamma {
  double shape;
  double scale;  // s
};

struct GaussianShifted {
  double mean;    // s
  double stddev;  // s
};

struct EmpiricalKde {
  std::vector<double> points;  // s, sorted ascending
  double bandwidth;            // s
};

struct EmpiricalHistogram {
  std::vector<double> edges;   // s, strictly increasing, size = masses + 1
  std::vector<double> masses;  // relative frequencies, sum to 1
};

enum class DelayKind { kExponential, kGamma, kGaussian, kKde, kHistogram };

std::string to_string(DelayKind kind);

// One-sided queuing-delay density f_w. Values are immutable after
// construction and cheap to copy (the KDE lookup table is shared).
//
// The KDE is evaluated through a cubic Hermite table of the Gaussian
// kernel sum over its support; log_density, cdf and sample all operate on that
// table, so they describe exactly the same distribution.
class DelayModel {
 public:
  using Params = std::variant<Exponential, Gamma, GaussianShifted, EmpiricalKde,
                              EmpiricalHistogram>;

  static DelayModel exponential(double rate);
  static DelayModel gamma(double shape, double scale);
  static DelayModel gaussian(double mean, double stddev);
  static DelayModel kde(std::vector<double> points, double bandwidth);
  static DelayModel histogram(std::vector<double> edges, std::vector<double> masses);

  DelayKind kind() const noexcept;
  const Params& params() const noexcept { return params_; }

  // log f_w(w); -inf wherever the density is exactly zero.
  double log_density(double w) const noexcept;
  double cdf(double w) const noexcept;
  double quantile(double p) const;

  double mean() const noexcept { return mean_; }
  double stddev() const noexcept { return stddev_; }
  double median() const { return quantile(0.5); }

  SupportInterval support() const noexcept { return support_; }

  std::vector<double> sample(Rng& rng, std::size_t n) const;

 private:
  struct Table;

  explicit DelayModel(Params params);
  void init_moments();

  Params params_;
  std::shared_ptr<const Table> table_;
  SupportInterval support_{};
  double mean_ = 0.0;
  double stddev_ = 0.0;
};

enum class FitMethod { kKde, kHistogram };

// Silverman's rule: 0.9 * min(stddev, IQR / 1.34) * n^(-1/5).
double silverman_bandwidth(std::span<const double> samples);

// Builds an empirical density from delay samples (seconds). For histograms,
// `resolution` is the bin count; it is ignored for the KDE, whose lookup table
// size depends only on the points and bandwidth, so a serialized model reloads
// bit-identically.
DelayModel fit_empirical(std::span<const double> samples, FitMethod method,
                         std::size_t resolution = 200);

// Plain-text serialization: "# delay-model v1 <kind>" header, 17 significant
// digits per value.
void write_delay_model(std::ostream& out, const DelayModel& model);
DelayModel read_delay_model(std::istream& in);

}  // namespace ptpmm
