#include "ptpmm/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ptpmm/errors.hpp"

namespace ptpmm::quad {

namespace {

// QUADPACK qk15 nodes and weights.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min();
// exp(600) is far from overflow even after multiplying by weights.
constexpr double kRescaleMargin = 600.0;

struct Rescale {
  double log_peak;
};

struct Panel {
  double a, b;
  Channels r;
};

Panel eval_panel(const ChannelFn& f, std::size_t nc, double a, double b, std::size_t& evals) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  std::array<Channels, 15> fx;
  for (auto& ch : fx) ch = Channels(nc);
  f(c, fx[14]);
  for (std::size_t j = 0; j < 7; ++j) {
    f(c - h * kXgk[j], fx[2 * j]);
    f(c + h * kXgk[j], fx[2 * j + 1]);
  }
  evals += 15;

  Panel p{a, b, Channels(nc)};
  for (std::size_t k = 0; k < nc; ++k) {
    const double fc = fx[14].value[k];
    double resk = kWgk[7] * fc;
    double resg = kWg[3] * fc;
    double resabs = kWgk[7] * std::abs(fc);
    double err_in = kWgk[7] * fx[14].error[k];
    double abs_in = kWgk[7] * fx[14].absval[k];
    for (std::size_t j = 0; j < 7; ++j) {
      const double f1 = fx[2 * j].value[k], f2 = fx[2 * j + 1].value[k];
      resk += kWgk[j] * (f1 + f2);
      resabs += kWgk[j] * (std::abs(f1) + std::abs(f2));
      if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
      err_in += kWgk[j] * (fx[2 * j].error[k] + fx[2 * j + 1].error[k]);
      abs_in += kWgk[j] * (fx[2 * j].absval[k] + fx[2 * j + 1].absval[k]);
    }
    const double mean = 0.5 * resk;
    double resasc = kWgk[7] * std::abs(fc - mean);
    for (std::size_t j = 0; j < 7; ++j) {
      resasc += kWgk[j] * (std::abs(fx[2 * j].value[k] - mean) +
                           std::abs(fx[2 * j + 1].value[k] - mean));
    }
    resk *= h;
    resabs *= std::abs(h);
    resasc *= std::abs(h);
    double err = std::abs((resk - resg * h));
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    if (resabs > kTiny / (50.0 * kEps)) err = std::max(50.0 * kEps * resabs, err);
    p.r.value[k] = resk;
    p.r.error[k] = err + std::abs(h) * err_in;
    p.r.absval[k] = std::abs(h) * abs_in;
  }
  return p;
}

double panel_score(const Panel& p, const Channels& total) {
  double s = 0.0;
  for (std::size_t k = 0; k < total.size(); ++k) {
    if (total.absval[k] > 0.0) s = std::max(s, p.r.error[k] / total.absval[k]);
  }
  return s;
}

bool within(const Channels& total, double rel_tol) {
  for (std::size_t k = 0; k < total.size(); ++k) {
    if (total.error[k] > rel_tol * total.absval[k]) return false;
  }
  return true;
}

Channels sum_panels(const std::vector<Panel>& panels, std::size_t nc) {
  Channels t(nc);
  for (const auto& p : panels) {
    for (std::size_t k = 0; k < nc; ++k) {
      t.value[k] += p.r.value[k];
      t.error[k] += p.r.error[k];
      t.absval[k] += p.r.absval[k];
    }
  }
  return t;
}

// Uniform nodes over an interval, endpoints included.
double node(double lo, double hi, std::size_t i, std::size_t n) {
  if (i + 1 == n) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

void check_box(std::span<const SupportInterval> box) {
  if (box.empty()) throw InvalidArgument("integration box needs at least one axis");
  for (const auto& iv : box) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.hi > iv.lo)) {
      throw InvalidArgument("integration box axes must be finite with lo < hi");
    }
  }
}

// Calls visit(x, l) on a tensor grid of n nodes per axis. With an
// inner-support hint the last axis scans the hint clipped to the box widened
// by one box width each side, the same slack the integrator allows, so mass
// drifting past the box edge between rows is seen. visit also gets, for the
// last axis, the row interval actually scanned.
template <typename Visit>
void scan_grid(const LogDensity& log_f, std::span<const SupportInterval> box, std::size_t n,
               const InnerSupport& inner, Visit&& visit) {
  const std::size_t d = box.size();
  std::vector<double> x(d);
  std::vector<std::size_t> idx(d - 1, 0);
  while (true) {
    for (std::size_t k = 0; k + 1 < d; ++k) x[k] = node(box[k].lo, box[k].hi, idx[k], n);
    SupportInterval row = box[d - 1];
    if (inner) {
      const double w = row.width();
      row = intersect({row.lo - w, row.hi + w}, inner(std::span<const double>(x.data(), d - 1)));
    }
    if (!row.empty() && row.width() > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        x[d - 1] = node(row.lo, row.hi, i, n);
        visit(std::span<const double>(x), log_f(x), row, idx, i);
      }
    }
    std::size_t k = 0;
    while (k + 1 < d && ++idx[k] == n) idx[k++] = 0;
    if (k + 1 >= d) break;
  }
}

std::size_t scan_nodes(const QuadConfig& cfg, std::size_t dims) {
  if (dims <= 2) return cfg.grid_points;
  return std::max<std::size_t>(9, (cfg.grid_points / 2) | 1);
}

class Nested {
 public:
  Nested(const LogDensity& log_f, std::vector<const Weight*> weights,
         std::span<const SupportInterval> box, const InnerSupport& inner,
         const InnerBreaks& breaks, InnerRule rule, std::span<const double> outer_breaks,
         double rel_tol, std::size_t budget, double log_peak)
      : log_f_(log_f),
        weights_(std::move(weights)),
        box_(box),
        inner_(inner),
        breaks_(breaks),
        rule_(rule),
        outer_breaks_(outer_breaks),
        rel_tol_(rel_tol),
        budget_(budget),
        log_peak_(log_peak),
        x_(box.size()) {}

  Integral1D run() { return axis(0); }
  std::size_t evaluations() const { return evals_; }

 private:
  Integral1D axis(std::size_t k) {
    const std::size_t nc = weights_.size();
    const std::size_t d = box_.size();
    SupportInterval iv = box_[k];
    if (k + 1 == d && inner_) {
      // The located box only saw the inner support on the scan rows; between
      // them it can drift past the box edge, so allow one box width of slack.
      const double w = iv.width();
      iv = intersect({iv.lo - w, iv.hi + w}, inner_(std::span<const double>(x_.data(), k)));
    }
    if (iv.empty() || !(iv.width() > 0.0)) {
      Integral1D zero;
      zero.result = Channels(nc);
      zero.converged = true;
      return zero;
    }
    // Inner axes work to a tighter tolerance so their error does not swamp
    // the outer estimate.
    const double tol = rel_tol_ * std::pow(0.25, static_cast<double>(k));
    ChannelFn f = [this, k, d](double xv, Channels& out) {
      x_[k] = xv;
      if (k + 1 == d) {
        point(out);
      } else {
        Integral1D r = axis(k + 1);
        out = std::move(r.result);
      }
    };
    if (k + 1 == d && breaks_) {
      std::vector<double> pts{iv.lo, iv.hi};
      breaks_(std::span<const double>(x_.data(), k), iv, pts);
      std::sort(pts.begin(), pts.end());
      pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
      pts.erase(std::remove_if(pts.begin(), pts.end(),
                               [&](double v) { return v < iv.lo || v > iv.hi; }),
                pts.end());
      if (rule_ == InnerRule::kMidpoint) return piecewise_midpoint(f, nc, pts);
      return adaptive_gk(f, nc, pts, tol, budget_);
    }
    if (k == 0 && d > 1 && !outer_breaks_.empty()) {
      std::vector<double> pts{iv.lo};
      for (double b : outer_breaks_) {
        if (b > iv.lo && b < iv.hi) pts.push_back(b);
      }
      std::sort(pts.begin() + 1, pts.end());
      pts.push_back(iv.hi);
      return adaptive_gk(f, nc, pts, tol, budget_);
    }
    return adaptive_gk(f, nc, iv.lo, iv.hi, tol, budget_);
  }

  void point(Channels& out) {
    ++evals_;
    const double l = log_f_(x_);
    if (!(l > -kInf)) {
      std::fill(out.value.begin(), out.value.end(), 0.0);
      std::fill(out.error.begin(), out.error.end(), 0.0);
      std::fill(out.absval.begin(), out.absval.end(), 0.0);
      return;
    }
    if (l - log_peak_ > kRescaleMargin) throw Rescale{l};
    const double e = std::exp(l - log_peak_);
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      const double v = (*weights_[c])(x_) * e;
      out.value[c] = v;
      out.error[c] = 0.0;
      out.absval[c] = std::abs(v);
    }
  }

  const LogDensity& log_f_;
  std::vector<const Weight*> weights_;
  std::span<const SupportInterval> box_;
  const InnerSupport& inner_;
  const InnerBreaks& breaks_;
  InnerRule rule_;
  std::span<const double> outer_breaks_;
  double rel_tol_;
  std::size_t budget_;
  double log_peak_;
  std::vector<double> x_;
  std::size_t evals_ = 0;
};

}  // namespace

void QuadConfig::validate() const {
  if (grid_points < 9 || grid_points % 2 == 0) {
    throw InvalidArgument("grid_points must be odd and at least 9");
  }
  if (!(mass_tol > 0.0 && mass_tol < 1.0)) throw InvalidArgument("mass_tol must be in (0, 1)");
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw InvalidArgument("rel_tol must be in (0, 1)");
  if (max_panels < 1) throw InvalidArgument("max_panels must be positive");
}

Integral1D piecewise_midpoint(const ChannelFn& f, std::size_t channels,
                              std::span<const double> points) {
  if (points.size() < 2) throw InvalidArgument("piecewise_midpoint needs at least two points");
  Integral1D r;
  r.result = Channels(channels);
  Channels c(channels);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double h = points[i + 1] - points[i];
    if (!(h > 0.0)) continue;
    f(points[i] + 0.5 * h, c);
    ++r.evaluations;
    ++r.panels;
    for (std::size_t k = 0; k < channels; ++k) {
      r.result.value[k] += h * c.value[k];
      r.result.absval[k] += h * c.absval[k];
    }
  }
  r.converged = true;
  return r;
}

Integral1D adaptive_gk(const ChannelFn& f, std::size_t channels, double a, double b,
                       double rel_tol, std::size_t max_panels) {
  const std::array<double, 2> pts = {a, b};
  return adaptive_gk(f, channels, pts, rel_tol, max_panels);
}

Integral1D adaptive_gk(const ChannelFn& f, std::size_t channels, std::span<const double> points,
                       double rel_tol, std::size_t max_panels) {
  if (points.size() < 2) throw InvalidArgument("adaptive_gk needs at least two points");
  Integral1D out;
  std::vector<Panel> panels;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i + 1] > points[i]) {
      panels.push_back(eval_panel(f, channels, points[i], points[i + 1], out.evaluations));
    }
  }
  if (panels.empty()) {
    out.result = Channels(channels);
    out.converged = true;
    return out;
  }
  const std::size_t limit = panels.size() - 1 + max_panels;
  Channels total = sum_panels(panels, channels);
  while (true) {
    if (within(total, rel_tol)) {
      out.converged = true;
      break;
    }
    if (panels.size() >= limit) break;
    std::size_t worst = panels.size();
    double worst_score = 0.0;
    for (std::size_t i = 0; i < panels.size(); ++i) {
      const Panel& p = panels[i];
      const double mid = 0.5 * (p.a + p.b);
      if (!(mid > p.a && mid < p.b)) continue;  // cannot split further
      const double s = panel_score(p, total);
      if (s > worst_score) {
        worst_score = s;
        worst = i;
      }
    }
    if (worst == panels.size()) break;
    const Panel old = panels[worst];
    const double mid = 0.5 * (old.a + old.b);
    panels[worst] = eval_panel(f, channels, old.a, mid, out.evaluations);
    panels.push_back(eval_panel(f, channels, mid, old.b, out.evaluations));
    // Fresh sum rather than running updates: keeps the result independent of
    // the refinement history up to the final panel set.
    std::sort(panels.begin(), panels.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
    total = sum_panels(panels, channels);
  }
  out.result = sum_panels(panels, channels);
  out.panels = panels.size();
  return out;
}

std::vector<RatioResult> integrate_ratios(const LogDensity& log_f,
                                          const std::vector<Weight>& numerators,
                                          const Weight& denominator,
                                          std::span<const SupportInterval> box,
                                          const QuadConfig& cfg, const InnerSupport& inner,
                                          const InnerBreaks& breaks, InnerRule rule,
                                          std::span<const double> outer_breaks) {
  cfg.validate();
  check_box(box);
  std::vector<const Weight*> weights;
  for (const auto& w : numerators) weights.push_back(&w);
  weights.push_back(&denominator);
  const std::size_t nc = weights.size();
  const std::size_t den = nc - 1;

  double log_peak = -kInf;
  scan_grid(log_f, box, 9, inner,
            [&](auto, double l, const auto&, const auto&, std::size_t) {
              if (l > log_peak) log_peak = l;
            });

  std::vector<double> pass_errors;
  std::size_t evaluations = 0;
  Integral1D last;
  bool converged = false;
  double rel_err = kInf;
  std::size_t restarts = 0;
  for (std::size_t pass = 0; pass <= cfg.refinement_passes;) {
    const std::size_t budget = cfg.max_panels << pass;
    Nested nested(log_f, weights, box, inner, breaks, rule, outer_breaks, cfg.rel_tol, budget,
                  log_peak);
    try {
      last = nested.run();
    } catch (const Rescale& r) {
      evaluations += nested.evaluations();
      log_peak = r.log_peak;
      if (++restarts > 50) throw EmptyPosterior("posterior scale could not be stabilized");
      continue;
    }
    evaluations += nested.evaluations();
    rel_err = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      const double a = last.result.absval[c];
      if (a > 0.0) rel_err = std::max(rel_err, last.result.error[c] / a);
    }
    pass_errors.push_back(rel_err);
    converged = rel_err <= cfg.rel_tol;
    if (converged) break;
    ++pass;
  }

  const double d = last.result.value[den];
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw EmptyPosterior("posterior has no mass inside the integration box");
  }
  std::vector<RatioResult> out(numerators.size());
  for (std::size_t c = 0; c < numerators.size(); ++c) {
    RatioResult& r = out[c];
    const double n = last.result.value[c];
    r.value = n / d;
    r.numerator_sign = (n > 0.0) - (n < 0.0);
    r.log_numerator = n == 0.0 ? -kInf : std::log(std::abs(n)) + log_peak;
    r.log_denominator = std::log(d) + log_peak;
    r.rel_error = rel_err;
    r.evaluations = evaluations;
    r.converged = converged;
    r.warning = rel_err > 100.0 * cfg.rel_tol;
    r.pass_errors = pass_errors;
  }
  return out;
}

RatioResult integrate_ratio(const LogDensity& log_f, const Weight& numerator,
                            const Weight& denominator, std::span<const SupportInterval> box,
                            const QuadConfig& cfg, const InnerSupport& inner,
                            const InnerBreaks& breaks) {
  return integrate_ratios(log_f, {numerator}, denominator, box, cfg, inner, breaks).front();
}

std::vector<SupportInterval> locate_posterior_box(const LogDensity& log_f,
                                                  std::span<const SupportInterval> seed_box,
                                                  const QuadConfig& cfg,
                                                  const InnerSupport& inner) {
  cfg.validate();
  check_box(seed_box);
  const std::size_t d = seed_box.size();
  const std::size_t n = scan_nodes(cfg, d);
  std::vector<SupportInterval> box(seed_box.begin(), seed_box.end());

  double peak = -kInf;
  std::vector<double> peak_at(d);
  auto scan_peak = [&] {
    scan_grid(log_f, box, n, inner, [&](std::span<const double> x, double l, const auto&,
                                        const auto&, std::size_t) {
      if (l > peak) {
        peak = l;
        peak_at.assign(x.begin(), x.end());
      }
    });
  };

  scan_peak();
  for (int attempt = 0; attempt < 12 && !(peak > -kInf); ++attempt) {
    for (auto& iv : box) {
      const double c = 0.5 * (iv.lo + iv.hi), w = iv.width();
      iv = {c - 1.5 * w, c + 1.5 * w};
    }
    scan_peak();
  }
  if (!(peak > -kInf)) throw EmptyPosterior("no finite posterior density found near the seed");

  const double log_tol = std::log(cfg.mass_tol);
  for (int iter = 0; iter < 60; ++iter) {
    std::vector<double> xmin(d, kInf), xmax(d, -kInf), cell_lo(d), cell_hi(d);
    std::vector<bool> touch_lo(d, false), touch_hi(d, false);
    struct Hit {
      std::vector<double> x;
      SupportInterval row;
      double l;
    };
    std::vector<Hit> hits;
    scan_grid(log_f, box, n, inner,
              [&](std::span<const double> x, double l, const SupportInterval& row,
                  const auto&, std::size_t) {
                if (!(l > -kInf)) return;
                if (l > peak) {
                  peak = l;
                  peak_at.assign(x.begin(), x.end());
                }
                hits.push_back({std::vector<double>(x.begin(), x.end()), row, l});
              });
    const double threshold = peak + log_tol;
    bool any = false;
    for (const auto& h : hits) {
      if (!(h.l >= threshold)) continue;
      any = true;
      for (std::size_t k = 0; k < d; ++k) {
        const bool inner_axis = (k + 1 == d) && inner;
        const SupportInterval span_k = inner_axis ? h.row : box[k];
        const double cell = span_k.width() / static_cast<double>(n - 1);
        if (h.x[k] < xmin[k]) {
          xmin[k] = h.x[k];
          cell_lo[k] = cell;
        }
        if (h.x[k] > xmax[k]) {
          xmax[k] = h.x[k];
          cell_hi[k] = cell;
        }
        if (h.x[k] <= box[k].lo) touch_lo[k] = true;
        if (h.x[k] >= box[k].hi) touch_hi[k] = true;
      }
    }

    std::vector<SupportInterval> next = box;
    bool expanded = false;
    if (!any) {
      // Peak is narrower than the node spacing: zoom in around it.
      for (std::size_t k = 0; k < d; ++k) {
        const double cell = box[k].width() / static_cast<double>(n - 1);
        next[k] = {std::max(box[k].lo, peak_at[k] - cell), std::min(box[k].hi, peak_at[k] + cell)};
      }
    } else {
      for (std::size_t k = 0; k < d; ++k) {
        const double w = box[k].width();
        if (touch_lo[k]) {
          next[k].lo = box[k].lo - w;
          expanded = true;
        } else {
          next[k].lo = std::max(box[k].lo, xmin[k] - cell_lo[k]);
        }
        if (touch_hi[k]) {
          next[k].hi = box[k].hi + w;
          expanded = true;
        } else {
          next[k].hi = std::min(box[k].hi, xmax[k] + cell_hi[k]);
        }
        if (!(next[k].hi > next[k].lo)) {
          const double c = 0.5 * (next[k].lo + next[k].hi);
          const double half = std::max(std::abs(c) * 1e-12, 0.5 * cell_lo[k]);
          next[k] = {c - half, c + half};
        }
      }
    }
    bool stable = !expanded && any;
    for (std::size_t k = 0; k < d && stable; ++k) {
      const double w = box[k].width();
      stable = std::abs(next[k].lo - box[k].lo) <= 0.05 * w &&
               std::abs(next[k].hi - box[k].hi) <= 0.05 * w;
    }
    box = std::move(next);
    if (stable) break;
  }
  return box;
}

}  // namespace ptpmm::quad
