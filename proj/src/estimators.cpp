#include "ptpmm/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "ptpmm/errors.hpp"

namespace ptpmm {

namespace {

constexpr double kDropNats = 50.0;

struct LineFit {
  double phi, delta;
  double xbar, ybar;
  double sxx, syy;
};

// Least squares y = phi * x + delta over the 2P rows. Works for P = 1 too;
// the public gmle() insists on P >= 2.
LineFit fit_line(const TimestampSet& ts, double d_ms, double d_sm, double mu_fwd,
                 double mu_rev) {
  const std::size_t p = ts.size();
  const double n = 2.0 * static_cast<double>(p);
  auto xr = [&](std::size_t i) { return ts.t1[i] + d_ms + mu_fwd; };
  auto xs = [&](std::size_t i) { return ts.t4[i] - d_sm - mu_rev; };
  double xbar = 0.0, ybar = 0.0, xmax = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    xbar += xr(i) + xs(i);
    ybar += ts.t2[i] + ts.t3[i];
    xmax = std::max({xmax, std::abs(xr(i)), std::abs(xs(i))});
  }
  xbar /= n;
  ybar /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  auto acc = [&](double x, double y) {
    sxx += (x - xbar) * (x - xbar);
    sxy += (x - xbar) * (y - ybar);
    syy += (y - ybar) * (y - ybar);
  };
  for (std::size_t i = 0; i < p; ++i) {
    acc(xr(i), ts.t2[i]);
    acc(xs(i), ts.t3[i]);
  }
  const double floor = n * std::pow(std::numeric_limits<double>::epsilon() * xmax, 2);
  if (!(sxx > floor)) throw DegenerateDesign("least-squares regressors are all equal");
  const double phi = sxy / sxx;
  return {phi, ybar - phi * xbar, xbar, ybar, sxx, syy};
}

// Positive skew seed even when the least-squares slope is not.
double positive_phi(const LineFit& f) {
  if (f.phi > 0.0 && std::isfinite(f.phi)) return f.phi;
  const double r = std::sqrt(f.syy / f.sxx);
  return r > 0.0 ? r : 1.0;
}

double delay_scale(const DelayModel& fwd, const DelayModel& rev) {
  double s = 0.5 * (fwd.stddev() + rev.stddev());
  if (!(s > 0.0) || !std::isfinite(s)) s = 1e-6;
  return s;
}

double schedule_span(const TimestampSet& ts) {
  double lo = ts.t1.front(), hi = ts.t1.front();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    lo = std::min({lo, ts.t1[i], ts.t4[i]});
    hi = std::max({hi, ts.t1[i], ts.t4[i]});
  }
  return hi - lo;
}

// Bin edges of a histogram model, where its density jumps.
const std::vector<double>* jump_points(const DelayModel& m) {
  const auto* h = std::get_if<EmpiricalHistogram>(&m.params());
  return h ? &h->edges : nullptr;
}

// With histograms on both paths the posterior is flat in delta between
// breaks.
quad::InnerRule inner_rule(const DelayModel& fwd, const DelayModel& rev) {
  return jump_points(fwd) && jump_points(rev) ? quad::InnerRule::kMidpoint
                                              : quad::InnerRule::kAdaptive;
}

// Appends map(e) for every edge e in [lo, hi].
template <typename Map>
void edges_between(const std::vector<double>& edges, double lo, double hi, Map map,
                   std::vector<double>& out) {
  for (auto it = std::lower_bound(edges.begin(), edges.end(), lo); it != edges.end() && *it <= hi;
       ++it) {
    out.push_back(map(*it));
  }
}

// Offsets in [lo, hi] at which an implied delay of the K-model crosses a
// density jump; returned relative to delta0.
void offset_breaks(const TimestampSet& ts, double phi, double d_ms, double d_sm,
                   const DelayModel& fwd, const DelayModel& rev, double lo, double hi,
                   double delta0, std::vector<double>& out) {
  const auto* ef = jump_points(fwd);
  const auto* er = jump_points(rev);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ef) {
      // w1 = (t2 - delta) / phi - d_ms - t1 falls as delta grows.
      const double c = d_ms + ts.t1[i];
      edges_between(*ef, (ts.t2[i] - hi) / phi - c, (ts.t2[i] - lo) / phi - c,
                    [&](double e) { return ts.t2[i] - phi * (e + c) - delta0; }, out);
    }
    if (er) {
      // w2 = (delta - t3) / phi - d_sm + t4 rises with delta.
      const double c = d_sm - ts.t4[i];
      edges_between(*er, (lo - ts.t3[i]) / phi - c, (hi - ts.t3[i]) / phi - c,
                    [&](double e) { return ts.t3[i] + phi * (e + c) - delta0; }, out);
    }
  }
}

// Values of s in (s_lo, s_hi) where the feasible offset interval changes its
// bounding constraint or closes. Each bound is a line delta = a + b * phi, so
// the slice mass kinks there.
std::vector<double> feasible_kinks(const TimestampSet& ts, double d_ms, double d_sm,
                                   const SupportInterval& fwd, const SupportInterval& rev,
                                   double s_lo, double s_hi) {
  struct Line {
    double a, b;
    double at(double phi) const { return a + b * phi; }
  };
  std::vector<Line> lower, upper;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (std::isfinite(fwd.hi)) lower.push_back({ts.t2[i], -(fwd.hi + d_ms + ts.t1[i])});
    if (std::isfinite(fwd.lo)) upper.push_back({ts.t2[i], -(fwd.lo + d_ms + ts.t1[i])});
    if (std::isfinite(rev.lo)) lower.push_back({ts.t3[i], rev.lo + d_sm - ts.t4[i]});
    if (std::isfinite(rev.hi)) upper.push_back({ts.t3[i], rev.hi + d_sm - ts.t4[i]});
  }
  auto top = [&](double phi) {
    double v = -kInf;
    for (const auto& l : lower) v = std::max(v, l.at(phi));
    return v;
  };
  auto bottom = [&](double phi) {
    double v = kInf;
    for (const auto& l : upper) v = std::min(v, l.at(phi));
    return v;
  };
  std::vector<double> out;
  // A crossing counts when the lines involved are active there; the slack
  // only admits a few spurious breaks, which cost nothing in accuracy.
  auto scan = [&](const std::vector<Line>& x, const std::vector<Line>& y, bool same,
                  bool x_lower, bool y_lower) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      for (std::size_t k = same ? j + 1 : 0; k < y.size(); ++k) {
        if (x[j].b == y[k].b) continue;
        const double phi = (y[k].a - x[j].a) / (x[j].b - y[k].b);
        if (!(phi > 0.0)) continue;
        const double s = std::log(phi);
        if (!(s > s_lo && s < s_hi)) continue;
        const double v = x[j].at(phi);
        const double slack = 1e-12 * (std::abs(x[j].a) + std::abs(x[j].b * phi));
        auto active = [&](bool is_lower) {
          return is_lower ? v >= top(phi) - slack : v <= bottom(phi) + slack;
        };
        if (active(x_lower) && active(y_lower)) out.push_back(s);
      }
    }
  };
  scan(lower, lower, true, true, true);
  scan(upper, upper, true, false, false);
  scan(lower, upper, false, true, false);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct KProblem {
  const TimestampSet& ts;
  double d_ms, d_sm;
  const DelayModel& fwd;
  const DelayModel& rev;

  double loglik(double s, double delta) const {
    return log_likelihood_k(ts, std::exp(s), delta, d_ms, d_sm, fwd, rev);
  }
  SupportInterval feasible(double s) const {
    return feasible_delta(ts, std::exp(s), d_ms, d_sm, fwd.support(), rev.support());
  }
  // Offset bringing the implied delays closest (least squares) to the medians.
  double median_delta(double s) const {
    const double phi = std::exp(s);
    const double m1 = fwd.median(), m2 = rev.median();
    double a1 = 0.0, a2 = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      a1 += ts.t2[i] / phi - d_ms - ts.t1[i] - m1;
      a2 += -ts.t3[i] / phi - d_sm + ts.t4[i] - m2;
    }
    return phi * (a1 - a2) / (2.0 * static_cast<double>(ts.size()));
  }
};

// Moves delta strictly inside J; nullopt when J is empty.
std::optional<double> project(const SupportInterval& j, double delta) {
  if (j.empty()) return std::nullopt;
  if (delta > j.lo && delta < j.hi) return delta;
  const double w = j.width();
  if (!std::isfinite(w)) {
    if (delta <= j.lo) return j.lo + std::max(std::abs(j.lo) * 1e-15, 1e-300);
    return j.hi - std::max(std::abs(j.hi) * 1e-15, 1e-300);
  }
  const double nudge = 1e-10 * w;
  return std::clamp(delta, j.lo + nudge, j.hi - nudge);
}

struct Point2 {
  double s, delta, ll;
};

// Finite-likelihood point near (s0, delta0): try s0 first, then offsets of
// geometrically growing size on both sides.
std::optional<Point2> feasible_start(const KProblem& pb, double s0, double delta0) {
  auto try_at = [&](double s, double preferred) -> std::optional<Point2> {
    const SupportInterval j = pb.feasible(s);
    if (j.empty()) return std::nullopt;
    for (double cand : {preferred, pb.median_delta(s)}) {
      if (auto d = project(j, cand)) {
        const double ll = pb.loglik(s, *d);
        if (ll > -kInf) return Point2{s, *d, ll};
      }
    }
    if (std::isfinite(j.width()) && j.width() > 0.0) {
      std::optional<Point2> best;
      for (int k = 1; k < 64; ++k) {
        const double d = j.lo + j.width() * k / 64.0;
        const double ll = pb.loglik(s, d);
        if (ll > -kInf && (!best || ll > best->ll)) best = Point2{s, d, ll};
      }
      return best;
    }
    return std::nullopt;
  };
  if (auto p = try_at(s0, delta0)) return p;
  for (double r = 1e-6; r < 3.0; r *= 1.02) {
    for (double sgn : {-1.0, 1.0}) {
      if (auto p = try_at(s0 + sgn * r, delta0)) return p;
    }
  }
  return std::nullopt;
}

// Envelope of the quadrature channels, used to size the integration box so
// that the widest-tailed channel is captured too.
double log_envelope(double log_f, double s, double x, double phi0, double x_scale) {
  if (!(log_f > -kInf)) return log_f;
  return log_f + std::log1p(std::exp(s) / phi0 + std::abs(x) / x_scale);
}

Estimate finish_minimax(Scheme scheme, double phi_hat, double delta_hat,
                        const quad::RatioResult& r) {
  if (!(phi_hat > 0.0) || !std::isfinite(phi_hat) || !std::isfinite(delta_hat)) {
    throw EmptyPosterior("quadrature produced a non-finite estimate");
  }
  Estimate e;
  e.scheme = scheme;
  e.phi_hat = phi_hat;
  e.delta_hat = delta_hat;
  e.diagnostics.converged = r.converged;
  e.diagnostics.evaluations = r.evaluations;
  e.diagnostics.quad_rel_error = r.rel_error;
  e.diagnostics.quad_warning = r.warning;
  return e;
}

// ---- S-model, separable route -------------------------------------------

// At fixed phi the S-model posterior factorizes in alpha = delta/phi + d and
// beta = delta/phi - d: w1_i = A_i - alpha, w2_i = beta - C_i.
struct Factor {
  double log_mass = -kInf;  // log of the integral
  double mean = 0.0;        // first moment / mass
  double rel_err = 0.0;     // on the mass
  double mean_err = 0.0;    // absolute, on the mean
};

// log h(z) = sum_i log f(sign * (c_i - z)) over z in the support window.
class FactorIntegral {
 public:
  FactorIntegral(const DelayModel& model, int sign, double scale, double tol,
                 std::size_t budget)
      : model_(model), sign_(sign), scale_(scale), tol_(tol), budget_(budget) {}

  Factor operator()(const std::vector<double>& c) const {
    const SupportInterval sup = model_.support();
    double cmin = c.front(), cmax = c.front();
    for (double v : c) {
      cmin = std::min(cmin, v);
      cmax = std::max(cmax, v);
    }
    // sign=+1: w = c - z in [lo, hi]  ->  z in [cmax - hi, cmin - lo]
    // sign=-1: w = z - c in [lo, hi]  ->  z in [cmax + lo, cmin + hi]
    SupportInterval zs = sign_ > 0 ? SupportInterval{cmax - sup.hi, cmin - sup.lo}
                                   : SupportInterval{cmax + sup.lo, cmin + sup.hi};
    Factor out;
    if (zs.empty()) return out;

    auto logh = [&](double z) {
      double acc = 0.0;
      for (double v : c) {
        acc += model_.log_density(sign_ > 0 ? v - z : z - v);
        if (acc == -kInf) break;
      }
      return acc;
    };

    // Peak search: scan a finite support, or walk from its finite end or a
    // moment-matched guess.
    double peak = -kInf, zpk = 0.0;
    auto visit = [&](double z) {
      const double l = logh(z);
      if (l > peak) {
        peak = l;
        zpk = z;
      }
      return l;
    };
    double sum = 0.0;
    for (double v : c) sum += v;
    const double cmean = sum / static_cast<double>(c.size());
    const double guess = sign_ > 0 ? cmean - model_.mean() : cmean + model_.mean();
    double a = zs.lo, b = zs.hi;
    if (std::isfinite(a) && std::isfinite(b)) {
      for (int i = 0; i <= 32; ++i) visit(a + (b - a) * i / 32.0);
    } else {
      zpk = std::clamp(guess, std::isfinite(a) ? a : guess, std::isfinite(b) ? b : guess);
      visit(zpk);
      if (std::isfinite(a)) visit(a);
      if (std::isfinite(b)) visit(b);
      // A clamped guess sits on the finite end, where the density may vanish;
      // step inward until it does not.
      const double end = std::isfinite(a) ? a : b, dir = std::isfinite(a) ? 1.0 : -1.0;
      for (double step = 1e-6 * scale_; !(peak > -kInf) && step < 1e6 * scale_; step *= 2.0)
        visit(end + dir * step);
      // Local polish around the best point so the walk starts near the mode.
      for (double step = scale_; step > 1e-6 * scale_; step *= 0.5) {
        for (double z : {zpk - step, zpk + step}) {
          if (z >= a && z <= b) visit(z);
        }
      }
    }
    if (!(peak > -kInf)) return out;
    auto walk = [&](double from, double dir) {
      double step = scale_;
      double z = from;
      for (int it = 0; it < 200; ++it) {
        z = from + dir * step;
        const double l = visit(z);
        if (l < peak - kDropNats) break;
        step *= 2.0;
      }
      return z;
    };
    if (!std::isfinite(a)) a = walk(zpk, -1.0);
    if (!std::isfinite(b)) b = walk(zpk, +1.0);

    const double center = zpk;
    for (int restart = 0; restart < 20; ++restart) {
      double ref = peak;
      bool rescale = false;
      quad::ChannelFn f = [&](double z, quad::Channels& o) {
        const double l = logh(z);
        if (!(l > -kInf)) {
          o.value[0] = o.value[1] = 0.0;
          o.absval[0] = o.absval[1] = 0.0;
          o.error[0] = o.error[1] = 0.0;
          return;
        }
        if (l - ref > 600.0) rescale = true;
        const double e = std::exp(std::min(l - ref, 600.0));
        o.value[0] = e;
        o.value[1] = (z - center) * e;
        o.absval[0] = e;
        o.absval[1] = std::abs(o.value[1]);
        o.error[0] = o.error[1] = 0.0;
        if (l > peak) peak = l;
      };
      std::vector<double> pts{a, b};
      if (const auto* edges = jump_points(model_)) {
        for (double v : c) {
          if (sign_ > 0) {
            edges_between(*edges, v - b, v - a, [&](double e) { return v - e; }, pts);
          } else {
            edges_between(*edges, a - v, b - v, [&](double e) { return v + e; }, pts);
          }
        }
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        pts.erase(std::remove_if(pts.begin(), pts.end(), [&](double v) { return v < a || v > b; }),
                  pts.end());
      }
      // Between edge crossings a histogram factor is constant.
      const quad::Integral1D r = jump_points(model_) ? quad::piecewise_midpoint(f, 2, pts)
                                                     : quad::adaptive_gk(f, 2, pts, tol_, budget_);
      if (rescale) continue;
      const double m0 = r.result.value[0];
      if (!(m0 > 0.0)) return out;
      out.log_mass = std::log(m0) + ref;
      const double m1 = r.result.value[1] / m0;
      out.mean = center + m1;
      out.rel_err = r.result.error[0] / m0;
      out.mean_err = r.result.error[1] / m0 + std::abs(m1) * out.rel_err;
      return out;
    }
    throw EmptyPosterior("factor integral scale did not settle");
  }

 private:
  const DelayModel& model_;
  int sign_;
  double scale_;
  double tol_;
  std::size_t budget_;
};

struct SSlice {
  double log_den = -kInf;  // log of the s-integrand of the denominator
  double delta_mean = 0.0; // phi * (alpha_bar + beta_bar) / 2
  double rel_err = 0.0;
  double delta_err = 0.0;
};

class SeparableS {
 public:
  SeparableS(const TimestampSet& ts, const DelayModel& fwd, const DelayModel& rev, double tol,
             std::size_t budget)
      : ts_(ts),
        alpha_(fwd, +1, fwd.stddev() / std::sqrt(static_cast<double>(ts.size())), tol, budget),
        beta_(rev, -1, rev.stddev() / std::sqrt(static_cast<double>(ts.size())), tol, budget),
        a_(ts.size()),
        c_(ts.size()) {}

  SSlice operator()(double s) {
    const double phi = std::exp(s);
    for (std::size_t i = 0; i < ts_.size(); ++i) {
      a_[i] = ts_.t2[i] / phi - ts_.t1[i];
      c_[i] = ts_.t3[i] / phi - ts_.t4[i];
    }
    SSlice out;
    const Factor fa = alpha_(a_);
    if (!(fa.log_mass > -kInf)) return out;
    const Factor fb = beta_(c_);
    if (!(fb.log_mass > -kInf)) return out;
    const double p = static_cast<double>(ts_.size());
    // phi^(-2-2P) * (phi/2) * F1 * F2, times phi from d(phi) = phi ds.
    out.log_den = -2.0 * p * s + std::log(0.5) + fa.log_mass + fb.log_mass;
    out.delta_mean = 0.5 * phi * (fa.mean + fb.mean);
    out.rel_err = fa.rel_err + fb.rel_err;
    out.delta_err = 0.5 * phi * (fa.mean_err + fb.mean_err);
    return out;
  }

 private:
  const TimestampSet& ts_;
  FactorIntegral alpha_, beta_;
  std::vector<double> a_, c_;
};

// S-model seed: least squares of [t2, t3] on [t1 + mu, t4 - mu], a common
// intercept and the +-1 column carrying phi * d.
struct SSeed {
  double phi, d, delta;
};

SSeed fit_s_seed(const TimestampSet& ts, double mu_fwd, double mu_rev) {
  const std::size_t p = ts.size();
  Eigen::MatrixXd x(2 * p, 3);
  Eigen::VectorXd y(2 * p);
  // Center the time axis to keep the normal equations well conditioned.
  double t0 = 0.0;
  for (std::size_t i = 0; i < p; ++i) t0 += ts.t1[i] + ts.t4[i];
  t0 /= 2.0 * static_cast<double>(p);
  for (std::size_t i = 0; i < p; ++i) {
    x.row(static_cast<Eigen::Index>(i)) << ts.t1[i] + mu_fwd - t0, 1.0, 1.0;
    x.row(static_cast<Eigen::Index>(p + i)) << ts.t4[i] - mu_rev - t0, 1.0, -1.0;
    y(static_cast<Eigen::Index>(i)) = ts.t2[i];
    y(static_cast<Eigen::Index>(p + i)) = ts.t3[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < 3) throw DegenerateDesign("S-model design is rank deficient");
  const Eigen::Vector3d b = qr.solve(y);
  double phi = b(0);
  if (!(phi > 0.0)) {
    // Ratio of t2 to t1 spreads scales like phi under the S-model group.
    double m2 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      m2 += ts.t2[i];
      m1 += ts.t1[i];
    }
    m2 /= static_cast<double>(p);
    m1 /= static_cast<double>(p);
    double s22 = 0.0, s11 = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      s22 += (ts.t2[i] - m2) * (ts.t2[i] - m2);
      s11 += (ts.t1[i] - m1) * (ts.t1[i] - m1);
    }
    phi = std::sqrt(s22 / s11);
  }
  const double delta = b(1) - b(0) * t0;
  return {phi, b(2) / phi, delta};
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kGmle: return "gmle";
    case Scheme::kLmle: return "lmle";
    case Scheme::kMinimaxK: return "minimax-k";
    case Scheme::kMinimaxS: return "minimax-s";
  }
  return "unknown";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "gmle") return Scheme::kGmle;
  if (name == "lmle") return Scheme::kLmle;
  if (name == "minimax-k") return Scheme::kMinimaxK;
  if (name == "minimax-s") return Scheme::kMinimaxS;
  throw InvalidArgument("unknown scheme '" + name + "'");
}

quad::QuadConfig default_quad_config(Scheme s) {
  quad::QuadConfig cfg;
  cfg.rel_tol = s == Scheme::kMinimaxS ? kMinimaxSTol : kMinimaxKTol;
  return cfg;
}

Estimate gmle(const TimestampSet& ts, double d_ms, double d_sm, double mean_delay) {
  ts.validate();
  if (ts.size() < 2) throw InvalidArgument("gmle needs at least two rounds");
  const LineFit f = fit_line(ts, d_ms, d_sm, mean_delay, mean_delay);
  Estimate e;
  e.scheme = Scheme::kGmle;
  e.phi_hat = f.phi;
  e.delta_hat = f.delta;
  return e;
}

Estimate lmle(const TimestampSet& ts, double d_ms, double d_sm, const DelayModel& fwd,
              const DelayModel& rev, const LmleConfig& cfg) {
  ts.validate();
  if (ts.size() < 2) throw InvalidArgument("lmle needs at least two rounds");
  const KProblem pb{ts, d_ms, d_sm, fwd, rev};
  const LineFit g = fit_line(ts, d_ms, d_sm, fwd.mean(), rev.mean());
  const double phi0 = positive_phi(g);
  const double delta0 = g.ybar - phi0 * g.xbar;

  std::size_t evals = 0;
  auto eval = [&](double s, double delta) -> std::optional<Point2> {
    ++evals;
    const auto d = project(pb.feasible(s), delta);
    if (!d) return std::nullopt;
    const double ll = pb.loglik(s, *d);
    if (!(ll > -kInf)) return std::nullopt;
    return Point2{s, *d, ll};
  };

  std::optional<Point2> start = eval(std::log(phi0), delta0);
  if (!start) start = feasible_start(pb, std::log(phi0), delta0);
  if (!start) throw InfeasibleStart("no finite-likelihood point near the least-squares start");

  Point2 cur = *start;
  const double hs0 = cfg.step_s;
  const double hd0 = cfg.step_delta_scale * delay_scale(fwd, rev) * phi0;
  double hs = hs0, hd = hd0;
  bool converged = false;
  while (evals < cfg.max_evaluations) {
    if (hs < cfg.rel_stop * hs0 && hd < cfg.rel_stop * hd0) {
      converged = true;
      break;
    }
    Point2 best = cur;
    const std::array<std::pair<double, double>, 4> moves = {
        std::pair{hs, 0.0}, std::pair{-hs, 0.0}, std::pair{0.0, hd}, std::pair{0.0, -hd}};
    for (const auto& [ds, dd] : moves) {
      if (auto p = eval(cur.s + ds, cur.delta + dd); p && p->ll > best.ll) best = *p;
    }
    if (best.ll > cur.ll) {
      cur = best;
    } else {
      hs *= cfg.contraction;
      hd *= cfg.contraction;
    }
  }

  Estimate e;
  e.scheme = Scheme::kLmle;
  e.phi_hat = std::exp(cur.s);
  e.delta_hat = cur.delta;
  e.diagnostics.converged = converged;
  e.diagnostics.evaluations = evals;
  e.diagnostics.log_likelihood = cur.ll;
  return e;
}

Estimate minimax_k(const TimestampSet& ts, double d_ms, double d_sm, const DelayModel& fwd,
                   const DelayModel& rev, const quad::QuadConfig& cfg) {
  ts.validate();
  const KProblem pb{ts, d_ms, d_sm, fwd, rev};
  const LineFit g = fit_line(ts, d_ms, d_sm, fwd.mean(), rev.mean());
  const double phi0 = positive_phi(g);
  double s0 = std::log(phi0);
  double delta0 = g.ybar - phi0 * g.xbar;
  if (!(pb.loglik(s0, delta0) > -kInf)) {
    const auto p = feasible_start(pb, s0, delta0);
    if (!p) throw EmptyPosterior("no finite posterior density near the least-squares seed");
    s0 = p->s;
    delta0 = p->delta;
  }

  const double sigma = delay_scale(fwd, rev);
  const double x_scale = phi0 * sigma;
  const double p = static_cast<double>(ts.size());
  // Coordinates (s, x) with phi = e^s and delta = delta0 + x. The Jacobian
  // e^s and the denominator weight phi^-3 are folded into log_f.
  quad::LogDensity log_f = [&](std::span<const double> v) {
    const double l = pb.loglik(v[0], delta0 + v[1]);
    return l - 2.0 * v[0];
  };
  quad::InnerSupport inner = [&](std::span<const double> v) {
    const SupportInterval j = pb.feasible(v[0]);
    return SupportInterval{j.lo - delta0, j.hi - delta0};
  };
  quad::LogDensity envelope = [&](std::span<const double> v) {
    return log_envelope(log_f(v), v[0], v[1], phi0, x_scale);
  };

  const double ws = std::max(1e-3, 10.0 * sigma / std::max(schedule_span(ts), 1e-9));
  const double wx = 10.0 * x_scale * std::max(1.0, 1.0 / std::sqrt(p));
  const std::array<SupportInterval, 2> seed = {SupportInterval{s0 - ws, s0 + ws},
                                               SupportInterval{-wx, wx}};
  const auto box = quad::locate_posterior_box(envelope, seed, cfg, inner);

  const std::vector<quad::Weight> nums = {
      [](std::span<const double> v) { return v[1]; },
      [](std::span<const double> v) { return std::exp(v[0]); },
  };
  const quad::Weight den = [](std::span<const double>) { return 1.0; };
  quad::InnerBreaks breaks;
  if (jump_points(fwd) || jump_points(rev)) {
    breaks = [&](std::span<const double> v, const SupportInterval& iv, std::vector<double>& out) {
      offset_breaks(ts, std::exp(v[0]), d_ms, d_sm, fwd, rev, delta0 + iv.lo, delta0 + iv.hi,
                    delta0, out);
    };
  }
  const auto kinks =
      feasible_kinks(ts, d_ms, d_sm, fwd.support(), rev.support(), box[0].lo, box[0].hi);
  const auto r = quad::integrate_ratios(log_f, nums, den, box, cfg, inner, breaks,
                                        inner_rule(fwd, rev), kinks);
  // The ratio's error is driven by whichever channel is worst; both share it.
  return finish_minimax(Scheme::kMinimaxK, r[1].value, delta0 + r[0].value, r[0]);
}

Estimate minimax_s(const TimestampSet& ts, const DelayModel& fwd, const DelayModel& rev,
                   const quad::QuadConfig& cfg, MinimaxSRoute route) {
  ts.validate();
  if (ts.size() < 2) throw InvalidArgument("minimax-s needs at least two rounds");
  cfg.validate();
  const SSeed seed = fit_s_seed(ts, fwd.mean(), rev.mean());
  const double sigma = delay_scale(fwd, rev);
  const double phi0 = seed.phi;
  const double s0 = std::log(phi0);
  const double delta0 = seed.delta;
  const double x_scale = phi0 * sigma;
  const double ws = std::max(1e-3, 10.0 * sigma / std::max(schedule_span(ts), 1e-9));

  if (route == MinimaxSRoute::kDirect) {
    const double d0 = seed.d;
    quad::LogDensity log_f = [&](std::span<const double> v) {
      const double l = log_likelihood_s(ts, std::exp(v[0]), d0 + v[1], delta0 + v[2], fwd, rev);
      return l - v[0];  // Jacobian e^s times phi^-2
    };
    quad::InnerSupport inner = [&](std::span<const double> v) {
      const double d = d0 + v[1];
      const SupportInterval j =
          feasible_delta(ts, std::exp(v[0]), d, d, fwd.support(), rev.support());
      return SupportInterval{j.lo - delta0, j.hi - delta0};
    };
    quad::LogDensity envelope = [&](std::span<const double> v) {
      return log_envelope(log_f(v), v[0], v[2], phi0, x_scale);
    };
    const double wd = 10.0 * sigma;
    const std::array<SupportInterval, 3> seed_box = {SupportInterval{s0 - ws, s0 + ws},
                                                     SupportInterval{-wd, wd},
                                                     SupportInterval{-10 * x_scale, 10 * x_scale}};
    const auto box = quad::locate_posterior_box(envelope, seed_box, cfg, inner);
    const std::vector<quad::Weight> nums = {
        [](std::span<const double> v) { return v[2]; },
        [](std::span<const double> v) { return std::exp(v[0]); },
    };
    const quad::Weight den = [](std::span<const double>) { return 1.0; };
    quad::InnerBreaks breaks;
    if (jump_points(fwd) || jump_points(rev)) {
      breaks = [&](std::span<const double> v, const SupportInterval& iv, std::vector<double>& out) {
        const double d = d0 + v[1];
        offset_breaks(ts, std::exp(v[0]), d, d, fwd, rev, delta0 + iv.lo, delta0 + iv.hi, delta0,
                      out);
      };
    }
    const auto r =
        quad::integrate_ratios(log_f, nums, den, box, cfg, inner, breaks, inner_rule(fwd, rev));
    return finish_minimax(Scheme::kMinimaxS, r[1].value, delta0 + r[0].value, r[0]);
  }

  // Separable route: outer adaptive integral over s, two 1-D factor integrals
  // per node.
  const std::size_t inner_budget = cfg.max_panels;
  SeparableS slice(ts, fwd, rev, 0.1 * cfg.rel_tol, inner_budget);
  quad::LogDensity envelope = [&](std::span<const double> v) {
    const SSlice sl = slice(v[0]);
    return log_envelope(sl.log_den, v[0], sl.delta_mean - delta0, phi0, x_scale);
  };
  const std::array<SupportInterval, 1> seed_box = {SupportInterval{s0 - ws, s0 + ws}};
  std::vector<SupportInterval> box;
  {
    // The seed slice may have no mass (supports disjoint at phi0); shift the
    // seed to the nearest s that has.
    double s_ok = s0;
    if (!(slice(s0).log_den > -kInf)) {
      bool found = false;
      for (double r = 1e-6; r < 3.0 && !found; r *= 1.02) {
        for (double sgn : {-1.0, 1.0}) {
          if (slice(s0 + sgn * r).log_den > -kInf) {
            s_ok = s0 + sgn * r;
            found = true;
            break;
          }
        }
      }
      if (!found) throw EmptyPosterior("no finite S-model posterior near the seed");
    }
    const std::array<SupportInterval, 1> sb = {SupportInterval{s_ok - ws, s_ok + ws}};
    box = quad::locate_posterior_box(envelope, s_ok == s0 ? seed_box : sb, cfg, {});
  }

  double log_peak = -kInf;
  for (int i = 0; i <= 8; ++i) {
    const double s = box[0].lo + box[0].width() * i / 8.0;
    log_peak = std::max(log_peak, slice(s).log_den);
  }
  std::vector<double> pass_errors;
  std::size_t evaluations = 0;
  quad::Integral1D res;
  bool converged = false;
  double rel_err = kInf;
  for (std::size_t pass = 0, restarts = 0; pass <= cfg.refinement_passes;) {
    bool rescale = false;
    double new_peak = log_peak;
    quad::ChannelFn f = [&](double s, quad::Channels& o) {
      const SSlice sl = slice(s);
      if (!(sl.log_den > -kInf)) {
        for (std::size_t k = 0; k < 3; ++k) o.value[k] = o.error[k] = o.absval[k] = 0.0;
        return;
      }
      if (sl.log_den - log_peak > 600.0) {
        rescale = true;
        new_peak = std::max(new_peak, sl.log_den);
      }
      const double e = std::exp(std::min(sl.log_den - log_peak, 600.0));
      const double x = sl.delta_mean - delta0;
      const double phi = std::exp(s);
      o.value[0] = x * e;
      o.value[1] = phi * e;
      o.value[2] = e;
      o.error[0] = std::abs(x) * e * sl.rel_err + e * sl.delta_err;
      o.error[1] = phi * e * sl.rel_err;
      o.error[2] = e * sl.rel_err;
      for (std::size_t k = 0; k < 3; ++k) o.absval[k] = std::abs(o.value[k]);
    };
    res = quad::adaptive_gk(f, 3, box[0].lo, box[0].hi, cfg.rel_tol, cfg.max_panels << pass);
    evaluations += res.evaluations;
    if (rescale) {
      log_peak = new_peak;
      if (++restarts > 50) throw EmptyPosterior("S-model posterior scale did not settle");
      continue;
    }
    rel_err = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (res.result.absval[k] > 0.0) {
        rel_err = std::max(rel_err, res.result.error[k] / res.result.absval[k]);
      }
    }
    pass_errors.push_back(rel_err);
    converged = rel_err <= cfg.rel_tol;
    if (converged) break;
    ++pass;
  }
  const double den = res.result.value[2];
  if (!(den > 0.0)) throw EmptyPosterior("S-model posterior has no mass in the located box");
  quad::RatioResult r;
  r.converged = converged;
  r.evaluations = evaluations;
  r.rel_error = rel_err;
  r.warning = rel_err > 100.0 * cfg.rel_tol;
  r.pass_errors = pass_errors;
  return finish_minimax(Scheme::kMinimaxS, res.result.value[1] / den,
                        delta0 + res.result.value[0] / den, r);
}

}  // namespace ptpmm
