#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "ptpmm/errors.hpp"
#include "ptpmm/estimators.hpp"
#include "ptpmm/netsim.hpp"

using namespace ptpmm;

namespace {

constexpr double us = 1e-6;

TimestampSet instance(const DelayModel& m, std::size_t p, std::uint64_t seed,
                      ClockParams cp = {1.0, 2 * us, 2 * us, 2 * us},
                      T3Clock clock = T3Clock::kMaster) {
  Rng f(derive_seed(seed, Stream::kForward)), r(derive_seed(seed, Stream::kReverse));
  const DelayTrace tr{m.sample(f, p), m.sample(r, p)};
  return generate_exchange(cp, tr, Schedule::periodic(p, kRoundInterval, kT3Offset, clock));
}

void check_rel(double got, double want, double tol, int line = __builtin_LINE()) {
  CAPTURE(line);
  CHECK(std::abs(got - want) <= tol * std::abs(want));
}

}  // namespace

TEST_CASE("gmle on noiseless data") {
  const auto ts = generate_exchange({1.0, 0.0, 0.0, 0.0}, {{0.0, 0.0}, {0.0, 0.0}},
                                    Schedule::periodic(2));
  const auto e = gmle(ts, 0.0, 0.0, 0.0);
  CHECK(e.phi_hat == 1.0);
  CHECK(e.delta_hat == 0.0);
}

TEST_CASE("gmle matches the pseudo-inverse") {
  const auto m = DelayModel::gamma(2.0, 3 * us);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t p = 2 + seed * 3;
    const double md = 1.7 * us;
    const auto ts = instance(m, p, seed, {1.0 + 1e-4 * seed, -3 * us * seed, 2 * us, 5 * us});
    Eigen::MatrixXd x(2 * p, 2);
    Eigen::VectorXd y(2 * p);
    for (std::size_t i = 0; i < p; ++i) {
      x(i, 0) = ts.t1[i] + 2 * us + md;
      x(p + i, 0) = ts.t4[i] - 5 * us - md;
      x(i, 1) = x(p + i, 1) = 1.0;
      y(i) = ts.t2[i];
      y(p + i) = ts.t3[i];
    }
    const Eigen::VectorXd beta = x.completeOrthogonalDecomposition().pseudoInverse() * y;
    const auto e = gmle(ts, 2 * us, 5 * us, md);
    check_rel(e.phi_hat, beta(0), 1e-10);
    check_rel(e.delta_hat, beta(1), 1e-10);
  }
}

TEST_CASE("gmle degenerate design") {
  // Regressors that differ only by rounding carry no slope information.
  TimestampSet ts;
  ts.t1 = {1.0, std::nextafter(1.0, 2.0)};
  ts.t4 = ts.t1;
  ts.t2 = {1.0, 1.0};
  ts.t3 = {1.0, 1.0};
  CHECK_THROWS_AS(gmle(ts, 0.0, 0.0, 0.0), DegenerateDesign);
}

TEST_CASE("gmle, lmle and minimax-k equivariance") {
  const auto m = DelayModel::gamma(2.0, us);
  const double a = 2.0, b = 1 * us;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ts = instance(m, 8, seed);
    const auto g = transform_k(ts, a, b);
    const auto e0 = gmle(ts, 2 * us, 2 * us, m.mean());
    const auto e1 = gmle(g, 2 * us, 2 * us, m.mean());
    check_rel(e1.phi_hat, a * e0.phi_hat, 1e-9);
    check_rel(e1.delta_hat, a * e0.delta_hat + b, 1e-9);

    const auto l0 = lmle(ts, 2 * us, 2 * us, m, m);
    const auto l1 = lmle(g, 2 * us, 2 * us, m, m);
    // Holds to the pattern search's resolution near a flat maximum.
    check_rel(l1.phi_hat, a * l0.phi_hat, 1e-8);
    check_rel(l1.delta_hat, a * l0.delta_hat + b, 1e-6);

    const auto cfg = default_quad_config(Scheme::kMinimaxK);
    const auto k0 = minimax_k(ts, 2 * us, 2 * us, m, m, cfg);
    const auto k1 = minimax_k(g, 2 * us, 2 * us, m, m, cfg);
    check_rel(k1.phi_hat, a * k0.phi_hat, 1e-5);
    check_rel(k1.delta_hat, a * k0.delta_hat + b, 1e-5);
    CHECK(k0.phi_hat > 0.0);
  }
}

TEST_CASE("minimax-s equivariance") {
  const auto m = DelayModel::gamma(2.0, us);
  const double a = 2.0, b = 0.5 * us, c = 1 * us;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto ts = instance(m, 6, seed);
    const auto cfg = default_quad_config(Scheme::kMinimaxS);
    const auto s0 = minimax_s(ts, m, m, cfg);
    const auto s1 = minimax_s(transform_s(ts, a, b, c), m, m, cfg);
    check_rel(s1.phi_hat, a * s0.phi_hat, 1e-5);
    check_rel(s1.delta_hat, a * s0.delta_hat + c, 1e-5);
    CHECK(s0.phi_hat > 0.0);
  }
}

TEST_CASE("minimax-s routes agree") {
  const auto m = DelayModel::exponential(1e6);
  const auto ts = instance(m, 3, 4);
  const auto cfg = default_quad_config(Scheme::kMinimaxS);
  const auto a = minimax_s(ts, m, m, cfg, MinimaxSRoute::kSeparable);
  const auto b = minimax_s(ts, m, m, cfg, MinimaxSRoute::kDirect);
  check_rel(b.phi_hat, a.phi_hat, 1e-5);
  check_rel(b.delta_hat, a.delta_hat, 1e-4);
}

TEST_CASE("minimax agrees with the exponential oracles") {
  const auto m = DelayModel::exponential(1e6);
  SUBCASE("k, one round") {
    const auto ts = instance(m, 1, 11, {1.0, 7 * us, 2 * us, 2 * us});
    const auto o = oracle::minimax_k_exponential(ts, 2 * us, 2 * us, 1e6);
    const auto k = minimax_k(ts, 2 * us, 2 * us, m, m, default_quad_config(Scheme::kMinimaxK));
    check_rel(k.phi_hat, o.phi, 1e-5);
    check_rel(k.delta_hat, o.delta, 1e-5);
  }
  SUBCASE("k, two rounds") {
    const auto ts = instance(m, 2, 12, {1.0, 20 * us, 1 * us, 3 * us});
    const auto o = oracle::minimax_k_exponential(ts, 1 * us, 3 * us, 1e6);
    const auto k = minimax_k(ts, 1 * us, 3 * us, m, m, default_quad_config(Scheme::kMinimaxK));
    check_rel(k.phi_hat, o.phi, 1e-5);
    check_rel(k.delta_hat, o.delta, 1e-5);
  }
  SUBCASE("k, thirteen rounds, rescaled") {
    // The feasible offsets drift across the located box near the edges of
    // the skew range; the box search must still see them.
    const auto m13 = DelayModel::exponential(1.6e6);
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto ts = transform_k(instance(m13, 13, 40 + seed, {1.0, -12 * us, 3 * us, 1.5 * us}),
                                  1.52, -7.4 * us);
      const auto o = oracle::minimax_k_exponential(ts, 3 * us, 1.5 * us, 1.6e6);
      const auto k = minimax_k(ts, 3 * us, 1.5 * us, m13, m13,
                               default_quad_config(Scheme::kMinimaxK));
      check_rel(k.phi_hat, o.phi, 1e-8);
      check_rel(k.delta_hat, o.delta, 1e-7);
    }
  }
  SUBCASE("s, two rounds") {
    const auto ts = instance(m, 2, 13, {1.0, 10 * us, 2 * us, 2 * us});
    const auto o = oracle::minimax_s_exponential(ts, 1e6);
    const auto s = minimax_s(ts, m, m, default_quad_config(Scheme::kMinimaxS));
    check_rel(s.phi_hat, o.phi, 1e-4);
    check_rel(s.delta_hat, o.delta, 1e-4);
  }
}

TEST_CASE("minimax-k on histogram delays matches a brute-force grid") {
  const auto m = DelayModel::histogram({0.0, 2 * us, 5 * us, 6 * us, 10 * us},
                                       {0.3, 0.4, 0.1, 0.2});
  const double dm = 4 * us, ds = 1.5 * us;
  for (auto clock : {T3Clock::kMaster, T3Clock::kSlave}) {
    CAPTURE(static_cast<int>(clock));
    const auto ts = instance(m, 3, 8, {1.0, 30 * us, dm, ds}, clock);
    const auto k = minimax_k(ts, dm, ds, m, m, default_quad_config(Scheme::kMinimaxK));
    // Midpoint grid over (log phi, delta); first order at the jumps, so a
    // fine grid is still only good to about 1e-5.
    const int n = 3000;
    const double slo = -0.6, shi = 0.6, dlo = 0.0, dhi = 60 * us;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s = slo + (shi - slo) * (i + 0.5) / n;
      for (int j = 0; j < n; ++j) {
        const double d = dlo + (dhi - dlo) * (j + 0.5) / n;
        const double l = log_likelihood_k(ts, std::exp(s), d, dm, ds, m, m) - 2 * s;
        if (!(l > -kInf)) continue;
        const double e = std::exp(l - 60.0);
        m0 += e;
        m1 += e * d;
        m2 += e * std::exp(s);
      }
    }
    REQUIRE(m0 > 0.0);
    check_rel(k.phi_hat, m2 / m0, 2e-5);
    check_rel(k.delta_hat, m1 / m0, 2e-5);
  }
}

TEST_CASE("lmle ascends from the least-squares start") {
  NetworkConfig net;
  Rng train(1);
  const auto kde = fit_empirical(collect_training_trace(net, 20000, train), FitMethod::kKde);
  Rng f(2), r(3);
  const DelayTrace tr{simulate_path_delays(net, 5, kProbeInterval, f),
                      simulate_path_delays(net, 5, kProbeInterval, r)};
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us}, tr,
                                    Schedule::periodic(5, kRoundInterval, kT3Offset,
                                                       T3Clock::kMaster));
  const auto g = gmle(ts, 2 * us, 2 * us, kde.mean());
  const double at_start = log_likelihood_k(ts, g.phi_hat, g.delta_hat, 2 * us, 2 * us, kde, kde);
  const auto l = lmle(ts, 2 * us, 2 * us, kde, kde);
  CHECK(l.diagnostics.log_likelihood >= at_start);
  CHECK(l.diagnostics.log_likelihood ==
        log_likelihood_k(ts, l.phi_hat, l.delta_hat, 2 * us, 2 * us, kde, kde));
}

TEST_CASE("lmle beats a random multistart on exponential delays") {
  const auto m = DelayModel::exponential(1e6);
  const auto ts = instance(m, 64, 21);
  const auto l = lmle(ts, 2 * us, 2 * us, m, m);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> us_(-2e-3, 2e-3), ud(-3 * us, 3 * us);
  double best = -kInf;
  for (int i = 0; i < 1000000; ++i) {
    const double phi = std::exp(us_(rng)), delta = 2 * us + ud(rng);
    best = std::max(best, log_likelihood_k(ts, phi, delta, 2 * us, 2 * us, m, m));
  }
  REQUIRE(best > -kInf);
  CHECK(l.diagnostics.log_likelihood >= best - 1e-9 * std::abs(best));

  // The likelihood is flat in delta and falls with phi, so the maximum sits
  // at the smallest phi with a non-empty feasible interval.
  double lo = 0.5, hi = 1.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (feasible_delta(ts, mid, 2 * us, 2 * us, m.support(), m.support()).empty() ? lo : hi) = mid;
  }
  check_rel(l.phi_hat, hi, 1e-9);
}

TEST_CASE("lmle with gaussian delays returns least squares") {
  const auto m = DelayModel::gaussian(5 * us, 1 * us);
  const auto ts = instance(m, 16, 3);
  const auto g = gmle(ts, 2 * us, 2 * us, m.mean());
  const auto l = lmle(ts, 2 * us, 2 * us, m, m);
  // Fixed sigma keeps a -2P log(phi) term that least squares ignores, so the
  // two agree to the skew's sampling scale, not to search tolerance.
  CHECK(std::abs(l.phi_hat - g.phi_hat) < 1e-3);
  CHECK(std::abs(l.delta_hat - g.delta_hat) < 1 * us);
}

TEST_CASE("scheme names") {
  for (auto s : {Scheme::kGmle, Scheme::kLmle, Scheme::kMinimaxK, Scheme::kMinimaxS})
    CHECK(parse_scheme(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scheme("mle"), InvalidArgument);
}

TEST_CASE("argument errors") {
  const auto m = DelayModel::exponential(1e6);
  const auto ts1 = instance(m, 1, 1);
  CHECK_THROWS_AS(minimax_s(ts1, m, m, default_quad_config(Scheme::kMinimaxS)), InvalidArgument);
  CHECK_THROWS_AS(lmle(ts1, 0.0, 0.0, m, m), InvalidArgument);
}

TEST_CASE("minimax-s on histogram delays matches a 3-d oracle") {
  const std::vector<double> edges = {0.0, 2 * us, 5 * us, 6 * us, 10 * us};
  const auto m = DelayModel::histogram(edges, {0.3, 0.4, 0.1, 0.2});
  const auto ts = instance(m, 2, 9, {1.0, 20 * us, 3 * us, 3 * us});
  const auto s = minimax_s(ts, m, m, default_quad_config(Scheme::kMinimaxS));
  // Midpoint grid over (log phi, d); along delta the posterior is constant
  // between the offsets where an implied delay hits a bin edge, so that axis
  // is summed exactly.
  const int n = 1200;
  const double slo = -1.0, shi = 1.2, dlo = -40 * us, dhi = 40 * us;
  double m0 = 0.0, m_phi = 0.0, m_delta = 0.0;
  std::vector<double> pts;
  for (int i = 0; i < n; ++i) {
    const double sv = slo + (shi - slo) * (i + 0.5) / n, phi = std::exp(sv);
    for (int j = 0; j < n; ++j) {
      const double d = dlo + (dhi - dlo) * (j + 0.5) / n;
      pts.clear();
      for (std::size_t k = 0; k < ts.size(); ++k) {
        for (double e : edges) {
          pts.push_back(ts.t2[k] - phi * (ts.t1[k] + d + e));
          pts.push_back(ts.t3[k] + phi * (e + d - ts.t4[k]));
        }
      }
      std::sort(pts.begin(), pts.end());
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double h = pts[k + 1] - pts[k], x = pts[k] + 0.5 * h;
        const double l = log_likelihood_s(ts, phi, d, x, m, m);
        if (!(h > 0.0) || !(l > -kInf)) continue;
        const double e = h * std::exp(l - sv - 25.0);
        m0 += e;
        m_phi += e * phi;
        m_delta += e * x;
      }
    }
  }
  REQUIRE(m0 > 0.0);
  check_rel(s.phi_hat, m_phi / m0, 1e-5);
  check_rel(s.delta_hat, m_delta / m0, 1e-5);
}
