#include "ptpmm/delay_models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "ptpmm/errors.hpp"
#include "text_util.hpp"

namespace ptpmm {

namespace {

constexpr double kKernelCutoff = 6.0;  // Gaussian kernel truncated at +-6h
constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
constexpr std::size_t kMinTableCells = 8192;
constexpr std::size_t kMaxTableCells = std::size_t{1} << 20;
constexpr double kCellsPerBandwidth = 8.0;

double uniform01(Rng& rng) {
  // 53 random bits -> [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

SupportInterval intersect(const SupportInterval& a, const SupportInterval& b) noexcept {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}

std::string to_string(DelayKind kind) {
  switch (kind) {
    case DelayKind::kExponential: return "exponential";
    case DelayKind::kGamma: return "gamma";
    case DelayKind::kGaussian: return "gaussian";
    case DelayKind::kKde: return "kde";
    case DelayKind::kHistogram: return "histogram";
  }
  return "unknown";
}

// Density on a uniform grid from node values and slopes: cubic Hermite inside
// a cell, linear where the cubic would not stay positive. Used for the KDE.
struct DelayModel::Table {
  double lo = 0.0;
  double step = 0.0;
  std::vector<double> density;     // node values, size cells + 1
  std::vector<double> slope;       // node derivatives
  std::vector<bool> linear;        // per cell
  std::vector<double> cumulative;  // CDF at nodes

  std::size_t cells() const { return density.size() - 1; }
  double hi() const { return lo + step * static_cast<double>(cells()); }

  double cubic(std::size_t j, double t) const {
    const double y0 = density[j], y1 = density[j + 1];
    const double m0 = slope[j] * step, m1 = slope[j + 1] * step;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (3 * t2 - 2 * t3) * y1 +
           (t3 - t2) * m1;
  }

  double in_cell(std::size_t j, double t) const {
    if (linear[j]) return density[j] + (density[j + 1] - density[j]) * t;
    return cubic(j, t);
  }

  // Mass of cell j over [0, t] (t in cell units).
  double partial(std::size_t j, double t) const {
    const double y0 = density[j], y1 = density[j + 1];
    if (linear[j]) return step * (y0 * t + 0.5 * (y1 - y0) * t * t);
    const double m0 = slope[j] * step, m1 = slope[j + 1] * step;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    return step * ((0.5 * t4 - t3 + t) * y0 + (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2) * m0 +
                   (t3 - 0.5 * t4) * y1 + (0.25 * t4 - t3 / 3.0) * m1);
  }

  // Cubic for cells whose end values are positive and whose interior minimum
  // (checked at the critical points) stays positive.
  void classify() {
    linear.assign(cells(), true);
    for (std::size_t j = 0; j < cells(); ++j) {
      if (!(density[j] > 0.0 && density[j + 1] > 0.0)) continue;
      const double y0 = density[j], y1 = density[j + 1];
      const double m0 = slope[j] * step, m1 = slope[j + 1] * step;
      // d/dt of the cubic: a t^2 + b t + c.
      const double a = 6 * y0 + 3 * m0 - 6 * y1 + 3 * m1;
      const double b = -6 * y0 - 4 * m0 + 6 * y1 - 2 * m1;
      const double c = m0;
      bool ok = true;
      auto check = [&](double t) {
        if (t > 0.0 && t < 1.0 && !(cubic(j, t) > 0.0)) ok = false;
      };
      if (a == 0.0) {
        if (b != 0.0) check(-c / b);
      } else {
        const double disc = b * b - 4 * a * c;
        if (disc >= 0.0) {
          const double r = std::sqrt(disc);
          check((-b - r) / (2 * a));
          check((-b + r) / (2 * a));
        }
      }
      linear[j] = !ok;
    }
  }

  void normalize() {
    double total = 0.0;
    for (std::size_t j = 0; j < cells(); ++j) total += partial(j, 1.0);
    for (double& d : density) d /= total;
    for (double& d : slope) d /= total;
    cumulative.assign(cells() + 1, 0.0);
    for (std::size_t j = 0; j < cells(); ++j) cumulative[j + 1] = cumulative[j] + partial(j, 1.0);
  }

  double value(double w) const {
    const double pos = (w - lo) / step;
    if (pos < 0.0 || pos > static_cast<double>(cells())) return 0.0;
    auto j = static_cast<std::size_t>(pos);
    if (j >= cells()) return density.back();
    return std::max(0.0, in_cell(j, pos - static_cast<double>(j)));
  }

  double cdf(double w) const {
    if (w <= lo) return 0.0;
    const double pos = (w - lo) / step;
    if (pos >= static_cast<double>(cells())) return 1.0;
    auto j = static_cast<std::size_t>(pos);
    return std::clamp(cumulative[j] + partial(j, pos - static_cast<double>(j)), 0.0, 1.0);
  }

  double quantile(double p) const {
    if (p <= 0.0) return lo;
    if (p >= 1.0) return hi();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), p);
    std::size_t j = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    j = std::clamp<std::size_t>(j, 1, cells()) - 1;
    const double r = p - cumulative[j];
    // Safeguarded Newton on the monotone in-cell mass.
    double a = 0.0, b = 1.0, t = 0.5;
    for (int it_n = 0; it_n < 60; ++it_n) {
      const double g = partial(j, t) - r;
      if (g > 0.0) b = t; else a = t;
      const double d = step * in_cell(j, t);
      double next = d > 0.0 ? t - g / d : 0.5 * (a + b);
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      if (std::abs(next - t) <= 1e-15) {
        t = next;
        break;
      }
      t = next;
    }
    return lo + (static_cast<double>(j) + t) * step;
  }

  // First two moments; three-point Gauss-Legendre is exact on each cell.
  std::pair<double, double> moments() const {
    constexpr std::array<double, 3> gx = {0.112701665379258311482073460022,
                                          0.5, 0.887298334620741688517926539978};
    constexpr std::array<double, 3> gw = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    auto raw = [&](double center) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < cells(); ++j) {
        for (std::size_t q = 0; q < 3; ++q) {
          const double f = gw[q] * step * in_cell(j, gx[q]);
          const double x = lo + (static_cast<double>(j) + gx[q]) * step - center;
          m1 += x * f;
          m2 += x * x * f;
        }
      }
      return std::pair{m1, m2};
    };
    const double rough = raw(0.0).first;
    auto [c1, c2] = raw(rough);
    return {rough + c1, std::max(0.0, c2 - c1 * c1)};
  }
};

DelayModel::DelayModel(Params params) : params_(std::move(params)) {}

DelayModel DelayModel::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw InvalidArgument("exponential rate must be positive and finite");
  }
  DelayModel m(Exponential{rate});
  m.support_ = {0.0, kInf};
  m.init_moments();
  return m;
}

DelayModel DelayModel::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale)) {
    throw InvalidArgument("gamma shape and scale must be positive and finite");
  }
  DelayModel m(Gamma{shape, scale});
  m.support_ = {0.0, kInf};
  m.init_moments();
  return m;
}

DelayModel DelayModel::gaussian(double mean, double stddev) {
  if (!(stddev > 0.0) || !std::isfinite(stddev) || !std::isfinite(mean)) {
    throw InvalidArgument("gaussian stddev must be positive and finite");
  }
  DelayModel m(GaussianShifted{mean, stddev});
  m.support_ = {-kInf, kInf};
  m.init_moments();
  return m;
}

DelayModel DelayModel::kde(std::vector<double> points, double bandwidth) {
  if (points.empty()) throw InvalidArgument("kde needs at least one sample point");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidArgument("kde bandwidth must be positive and finite");
  }
  if (!all_finite(points)) throw InvalidArgument("kde sample points must be finite");
  std::sort(points.begin(), points.end());
  if (points.front() < 0.0) throw InvalidArgument("kde sample points must be non-negative delays");

  const double h = bandwidth;
  const double lo = std::max(0.0, points.front() - kKernelCutoff * h);
  const double hi = points.back() + kKernelCutoff * h;
  const double range = hi - lo;
  const auto cells = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(kCellsPerBandwidth * range / h)), kMinTableCells,
      kMaxTableCells);
  const double step = range / static_cast<double>(cells);

  // Linear binning of the samples onto the table nodes, then a discrete
  // convolution with the truncated kernel and its derivative.
  std::vector<double> counts(cells + 1, 0.0);
  for (double p : points) {
    const double pos = (p - lo) / step;
    auto k = std::min(static_cast<std::size_t>(pos), cells - 1);
    const double frac = std::clamp(pos - static_cast<double>(k), 0.0, 1.0);
    counts[k] += 1.0 - frac;
    counts[k + 1] += frac;
  }
  const auto reach = static_cast<std::ptrdiff_t>(std::floor(kKernelCutoff * h / step));
  std::vector<double> kernel(static_cast<std::size_t>(2 * reach + 1));
  std::vector<double> dkernel(kernel.size());
  for (std::ptrdiff_t m = -reach; m <= reach; ++m) {
    const double z = static_cast<double>(m) * step / h;
    const auto i = static_cast<std::size_t>(m + reach);
    kernel[i] = kInvSqrt2Pi * std::exp(-0.5 * z * z) / h;
    dkernel[i] = -z / h * kernel[i];
  }
  auto table = std::make_shared<Table>();
  table->lo = lo;
  table->step = step;
  table->density.assign(cells + 1, 0.0);
  table->slope.assign(cells + 1, 0.0);
  const auto n_nodes = static_cast<std::ptrdiff_t>(cells + 1);
  for (std::ptrdiff_t j = 0; j < n_nodes; ++j) {
    double acc = 0.0, dacc = 0.0;
    const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, j - reach);
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(n_nodes - 1, j + reach);
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k) {
      const double c = counts[static_cast<std::size_t>(k)];
      if (c == 0.0) continue;
      const auto i = static_cast<std::size_t>(j - k + reach);
      acc += c * kernel[i];
      dacc += c * dkernel[i];
    }
    table->density[static_cast<std::size_t>(j)] = acc;
    table->slope[static_cast<std::size_t>(j)] = dacc;
  }
  // Mass clipped below zero is redistributed by renormalizing.
  table->classify();
  table->normalize();

  DelayModel m(EmpiricalKde{std::move(points), bandwidth});
  m.table_ = std::move(table);
  m.support_ = {lo, hi};
  m.init_moments();
  return m;
}

DelayModel DelayModel::histogram(std::vector<double> edges, std::vector<double> masses) {
  if (masses.empty()) throw InvalidArgument("histogram needs at least one bin");
  if (edges.size() != masses.size() + 1) {
    throw InvalidArgument("histogram needs one more edge than bins");
  }
  if (!all_finite(edges) || !all_finite(masses)) {
    throw InvalidArgument("histogram edges and masses must be finite");
  }
  if (edges.front() < 0.0) throw InvalidArgument("histogram support must be non-negative");
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    if (!(edges[k + 1] > edges[k])) throw InvalidArgument("histogram edges must increase");
  }
  double sum = 0.0;
  for (double m : masses) {
    if (m < 0.0) throw InvalidArgument("histogram masses must be non-negative");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("histogram masses must sum to 1");
  const SupportInterval support{edges.front(), edges.back()};
  DelayModel m(EmpiricalHistogram{std::move(edges), std::move(masses)});
  m.support_ = support;
  m.init_moments();
  return m;
}

void DelayModel::init_moments() {
  std::visit(
      [this](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          mean_ = 1.0 / p.rate;
          stddev_ = 1.0 / p.rate;
        } else if constexpr (std::is_same_v<T, Gamma>) {
          mean_ = p.shape * p.scale;
          stddev_ = std::sqrt(p.shape) * p.scale;
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          mean_ = p.mean;
          stddev_ = p.stddev;
        } else if constexpr (std::is_same_v<T, EmpiricalKde>) {
          auto [m, v] = table_->moments();
          mean_ = m;
          stddev_ = std::sqrt(v);
        } else {
          double m1 = 0.0;
          for (std::size_t k = 0; k < p.masses.size(); ++k) {
            m1 += p.masses[k] * 0.5 * (p.edges[k] + p.edges[k + 1]);
          }
          double var = 0.0;
          for (std::size_t k = 0; k < p.masses.size(); ++k) {
            const double a = p.edges[k] - m1, b = p.edges[k + 1] - m1;
            var += p.masses[k] * (a * a + a * b + b * b) / 3.0;
          }
          mean_ = m1;
          stddev_ = std::sqrt(var);
        }
      },
      params_);
}

DelayKind DelayModel::kind() const noexcept {
  return static_cast<DelayKind>(params_.index());
}

double DelayModel::log_density(double w) const noexcept {
  if (std::isnan(w)) return -kInf;
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          return w < 0.0 ? -kInf : std::log(p.rate) - p.rate * w;
        } else if constexpr (std::is_same_v<T, Gamma>) {
          if (w < 0.0 || std::isinf(w)) return -kInf;
          if (w == 0.0) {
            if (p.shape == 1.0) return -std::log(p.scale);
            return p.shape > 1.0 ? -kInf : kInf;
          }
          return (p.shape - 1.0) * std::log(w) - w / p.scale - std::lgamma(p.shape) -
                 p.shape * std::log(p.scale);
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          const double z = (w - p.mean) / p.stddev;
          return -0.5 * z * z - std::log(p.stddev) + std::log(kInvSqrt2Pi);
        } else if constexpr (std::is_same_v<T, EmpiricalKde>) {
          if (!support_.contains(w)) return -kInf;
          return std::log(table_->value(w));
        } else {
          if (!support_.contains(w)) return -kInf;
          auto it = std::upper_bound(p.edges.begin(), p.edges.end(), w);
          auto k = static_cast<std::size_t>(std::distance(p.edges.begin(), it));
          k = std::min(k, p.masses.size()) - 1;
          return std::log(p.masses[k] / (p.edges[k + 1] - p.edges[k]));
        }
      },
      params_);
}

double DelayModel::cdf(double w) const noexcept {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          return w <= 0.0 ? 0.0 : -std::expm1(-p.rate * w);
        } else if constexpr (std::is_same_v<T, Gamma>) {
          if (w <= 0.0) return 0.0;
          if (std::isinf(w)) return 1.0;
          return boost::math::cdf(boost::math::gamma_distribution<>(p.shape, p.scale), w);
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          return 0.5 * std::erfc(-(w - p.mean) / (p.stddev * std::sqrt(2.0)));
        } else if constexpr (std::is_same_v<T, EmpiricalKde>) {
          return table_->cdf(w);
        } else {
          if (w <= p.edges.front()) return 0.0;
          if (w >= p.edges.back()) return 1.0;
          double acc = 0.0;
          for (std::size_t k = 0; k < p.masses.size(); ++k) {
            if (w >= p.edges[k + 1]) {
              acc += p.masses[k];
            } else {
              acc += p.masses[k] * (w - p.edges[k]) / (p.edges[k + 1] - p.edges[k]);
              break;
            }
          }
          return std::min(1.0, acc);
        }
      },
      params_);
}

double DelayModel::quantile(double prob) const {
  if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument("quantile probability outside [0, 1]");
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          return prob >= 1.0 ? kInf : -std::log1p(-prob) / p.rate;
        } else if constexpr (std::is_same_v<T, Gamma>) {
          if (prob <= 0.0) return 0.0;
          if (prob >= 1.0) return kInf;
          return boost::math::quantile(boost::math::gamma_distribution<>(p.shape, p.scale), prob);
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          if (prob <= 0.0) return -kInf;
          if (prob >= 1.0) return kInf;
          return boost::math::quantile(boost::math::normal_distribution<>(p.mean, p.stddev), prob);
        } else if constexpr (std::is_same_v<T, EmpiricalKde>) {
          return table_->quantile(prob);
        } else {
          double acc = 0.0;
          for (std::size_t k = 0; k < p.masses.size(); ++k) {
            if (p.masses[k] > 0.0 && acc + p.masses[k] >= prob) {
              const double frac = std::clamp((prob - acc) / p.masses[k], 0.0, 1.0);
              return p.edges[k] + frac * (p.edges[k + 1] - p.edges[k]);
            }
            acc += p.masses[k];
          }
          return p.edges.back();
        }
      },
      params_);
}

std::vector<double> DelayModel::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out;
  out.reserve(n);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          std::exponential_distribution<double> dist(p.rate);
          for (std::size_t i = 0; i < n; ++i) out.push_back(dist(rng));
        } else if constexpr (std::is_same_v<T, Gamma>) {
          std::gamma_distribution<double> dist(p.shape, p.scale);
          for (std::size_t i = 0; i < n; ++i) out.push_back(dist(rng));
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          std::normal_distribution<double> dist(p.mean, p.stddev);
          for (std::size_t i = 0; i < n; ++i) out.push_back(dist(rng));
        } else {
          for (std::size_t i = 0; i < n; ++i) out.push_back(quantile(uniform01(rng)));
        }
      },
      params_);
  return out;
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : sorted) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto k = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(k);
    return k + 1 < n ? sorted[k] + frac * (sorted[k + 1] - sorted[k]) : sorted[k];
  };
  const double iqr = q(0.75) - q(0.25);
  double spread = std::min(sd, iqr / 1.34);
  // Same fallback as R's bw.nrd0 when the IQR collapses.
  if (!(spread > 0.0)) spread = sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

DelayModel fit_empirical(std::span<const double> samples, FitMethod method,
                         std::size_t resolution) {
  if (samples.empty()) throw InvalidArgument("cannot fit a delay model to zero samples");
  if (!all_finite(samples)) throw InvalidArgument("delay samples must be finite");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (*mn == *mx) throw DegenerateFit("all delay samples are identical");

  if (method == FitMethod::kKde) {
    const double h = silverman_bandwidth(samples);
    if (!(h > 0.0)) throw DegenerateFit("kde bandwidth collapsed to zero");
    return DelayModel::kde(std::vector<double>(samples.begin(), samples.end()), h);
  }

  if (resolution < 2) throw InvalidArgument("histogram resolution must be at least 2");
  const double lo = *mn, hi = *mx;
  const double width = (hi - lo) / static_cast<double>(resolution);
  std::vector<double> edges(resolution + 1);
  for (std::size_t k = 0; k <= resolution; ++k) edges[k] = lo + width * static_cast<double>(k);
  edges.back() = hi;
  std::vector<double> counts(resolution, 0.0);
  for (double s : samples) {
    auto k = static_cast<std::size_t>((s - lo) / width);
    counts[std::min(k, resolution - 1)] += 1.0;
  }
  const double n = static_cast<double>(samples.size());
  for (double& c : counts) c /= n;
  // Absorb rounding so the masses sum to one to machine precision.
  const double sum = std::accumulate(counts.begin(), counts.end(), 0.0);
  auto biggest = std::max_element(counts.begin(), counts.end());
  *biggest += 1.0 - sum;
  return DelayModel::histogram(std::move(edges), std::move(counts));
}

void write_delay_model(std::ostream& out, const DelayModel& model) {
  out << "# delay-model v1 " << to_string(model.kind()) << '\n';
  out << std::setprecision(17);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Exponential>) {
          out << "rate " << p.rate << '\n';
        } else if constexpr (std::is_same_v<T, Gamma>) {
          out << "shape " << p.shape << '\n' << "scale " << p.scale << '\n';
        } else if constexpr (std::is_same_v<T, GaussianShifted>) {
          out << "mean " << p.mean << '\n' << "stddev " << p.stddev << '\n';
        } else if constexpr (std::is_same_v<T, EmpiricalKde>) {
          for (double x : p.points) out << x << '\n';
          out << "bandwidth " << p.bandwidth << '\n';
        } else {
          for (std::size_t k = 0; k < p.masses.size(); ++k) {
            out << p.edges[k] << ',' << p.masses[k] << '\n';
          }
          out << p.edges.back() << '\n';
        }
      },
      model.params());
}

using detail::parse_double;
using detail::trim;

DelayModel read_delay_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty delay-model file");
  std::istringstream header(line);
  std::string hash, tag, version, kind;
  header >> hash >> tag >> version >> kind;
  if (hash != "#" || tag != "delay-model" || version != "v1") {
    throw ParseError("missing '# delay-model v1 <kind>' header");
  }

  std::vector<std::string> records;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    records.push_back(line);
  }
  auto keyed = [&](const std::string& key) {
    for (const auto& r : records) {
      if (r.rfind(key + " ", 0) == 0) return parse_double(trim(r.substr(key.size())));
    }
    throw ParseError("delay-model file lacks '" + key + "'");
  };

  if (kind == "exponential") return DelayModel::exponential(keyed("rate"));
  if (kind == "gamma") return DelayModel::gamma(keyed("shape"), keyed("scale"));
  if (kind == "gaussian") return DelayModel::gaussian(keyed("mean"), keyed("stddev"));
  if (kind == "kde") {
    if (records.empty() || records.back().rfind("bandwidth ", 0) != 0) {
      throw ParseError("kde file must end with a bandwidth footer");
    }
    std::vector<double> points;
    points.reserve(records.size() - 1);
    for (std::size_t i = 0; i + 1 < records.size(); ++i) points.push_back(parse_double(records[i]));
    return DelayModel::kde(std::move(points), keyed("bandwidth"));
  }
  if (kind == "histogram") {
    if (records.size() < 2) throw ParseError("histogram file needs at least one bin");
    std::vector<double> edges, masses;
    for (std::size_t i = 0; i + 1 < records.size(); ++i) {
      const auto comma = records[i].find(',');
      if (comma == std::string::npos) throw ParseError("histogram record needs 'edge,mass'");
      edges.push_back(parse_double(trim(records[i].substr(0, comma))));
      masses.push_back(parse_double(trim(records[i].substr(comma + 1))));
    }
    edges.push_back(parse_double(records.back()));
    return DelayModel::histogram(std::move(edges), std::move(masses));
  }
  throw ParseError("unknown delay-model kind '" + kind + "'");
}

}  // namespace ptpmm
