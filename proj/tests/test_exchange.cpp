#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ptpmm/errors.hpp"
#include "ptpmm/exchange.hpp"

using namespace ptpmm;

namespace {

constexpr double us = 1e-6;

DelayTrace draw(const DelayModel& m, std::size_t p, std::uint64_t seed) {
  Rng f(seed), r(seed + 1000);
  return {m.sample(f, p), m.sample(r, p)};
}

}  // namespace

TEST_CASE("identity clock with zero delays") {
  const Schedule s = Schedule::periodic(2);
  const auto ts = generate_exchange({1.0, 0.0, 0.0, 0.0}, {{0.0, 0.0}, {0.0, 0.0}}, s);
  CHECK(ts.t2[0] == 0.0);
  CHECK(ts.t2[1] == doctest::Approx(40 * us).epsilon(1e-15));
  CHECK(ts.t4 == ts.t3);
}

TEST_CASE("hand-computed round") {
  Schedule s;
  s.t1 = {0.0};
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us}, {{us}, {3 * us}}, s);
  CHECK(ts.t3[0] == doctest::Approx(20 * us).epsilon(1e-15));
  CHECK(ts.t2[0] == doctest::Approx(5 * us).epsilon(1e-12));
  CHECK(ts.t4[0] == doctest::Approx(23 * us).epsilon(1e-12));
}

TEST_CASE("generation errors") {
  const Schedule s = Schedule::periodic(2);
  CHECK_THROWS_AS(generate_exchange({0.0, 0.0, 0.0, 0.0}, {{0, 0}, {0, 0}}, s), InvalidArgument);
  CHECK_THROWS_AS(generate_exchange({1.0, 0.0, 0.0, 0.0}, {{0}, {0}}, s), InvalidArgument);
}

TEST_CASE("implied delays round trip") {
  const auto m = DelayModel::gamma(2.0, us);
  for (auto clock : {T3Clock::kSlave, T3Clock::kMaster}) {
    const ClockParams cp{1.0001, -3 * us, 2 * us, 5 * us};
    const auto tr = draw(m, 16, 1);
    const auto ts = generate_exchange(cp, tr, Schedule::periodic(16, kRoundInterval, kT3Offset, clock));
    const auto back = implied_delays(ts, cp.phi, cp.delta, cp.d_ms, cp.d_sm);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(back.w1[i] == doctest::Approx(tr.w1[i]).epsilon(1e-9));
      CHECK(back.w2[i] == doctest::Approx(tr.w2[i]).epsilon(1e-9));
      CHECK(std::abs(back.w1[i] - tr.w1[i]) <= 1e-12 * std::abs(ts.t2[i]) / cp.phi);
    }
  }
}

TEST_CASE("k likelihood") {
  const auto m = DelayModel::exponential(1e6);
  const ClockParams cp{1.0, 2 * us, 2 * us, 2 * us};
  const auto tr = draw(m, 1, 3);
  const auto ts = generate_exchange(cp, tr, Schedule::periodic(1));
  const double ll = log_likelihood_k(ts, 1.0, cp.delta, cp.d_ms, cp.d_sm, m, m);
  CHECK(ll == doctest::Approx(2 * std::log(1e6) - 1e6 * (tr.w1[0] + tr.w2[0])).epsilon(1e-12));
  const double shift = tr.w1[0] + 0.5 * us;
  CHECK(log_likelihood_k(ts, 1.0, cp.delta + shift, cp.d_ms, cp.d_sm, m, m) == -kInf);
  CHECK_THROWS_AS(log_likelihood_k(ts, -1.0, 0.0, 0.0, 0.0, m, m), InvalidArgument);
}

TEST_CASE("s likelihood is the k likelihood with equal path delays") {
  const auto m = DelayModel::gamma(1.5, us);
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us}, draw(m, 8, 4),
                                    Schedule::periodic(8));
  for (double phi : {0.999, 1.0, 1.002})
    for (double d : {1 * us, 2 * us})
      for (double delta : {1 * us, 2 * us, 3 * us})
        CHECK(log_likelihood_s(ts, phi, d, delta, m, m) ==
              log_likelihood_k(ts, phi, delta, d, d, m, m));
  CHECK(std::isfinite(log_likelihood_s(ts, 1.0, 2 * us, 2 * us, m, m)));
}

TEST_CASE("uniform histogram likelihood is a support indicator") {
  const auto m = DelayModel::histogram({0.0, 4 * us}, {1.0});
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us},
                                    {{1 * us, 2.5 * us}, {0.5 * us, 3 * us}},
                                    Schedule::periodic(2));
  const double c = 4 * std::log(1.0 / (4 * us));
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int inside = 0;
  for (int k = 0; k < 2000; ++k) {
    const double phi = 1.0 + 0.02 * u(rng), d = 2 * us + 2 * us * u(rng),
                 delta = 2 * us + 3 * us * u(rng);
    const auto w = implied_delays(ts, phi, delta, d, d);
    bool in = true;
    for (std::size_t i = 0; i < 2; ++i)
      in = in && w.w1[i] >= 0 && w.w1[i] <= 4 * us && w.w2[i] >= 0 && w.w2[i] <= 4 * us;
    const double ll = log_likelihood_s(ts, phi, d, delta, m, m);
    if (in) {
      ++inside;
      CHECK(ll == doctest::Approx(c - 4 * std::log(phi)).epsilon(1e-12));
    } else {
      CHECK(ll == -kInf);
    }
  }
  CHECK(inside > 50);
}

TEST_CASE("group actions shift the likelihood by -2P log a") {
  const auto m = DelayModel::gamma(2.0, us);
  const std::size_t p = 6;
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us}, draw(m, p, 6),
                                    Schedule::periodic(p));
  const double a = 1.7, b = 3 * us, c = -5 * us;
  const auto gk = transform_k(ts, a, b);
  const auto gs = transform_s(ts, a, b, c);
  for (double phi : {0.9995, 1.0, 1.0004}) {
    for (double delta : {1.5 * us, 2 * us, 2.5 * us}) {
      const double base = log_likelihood_k(ts, phi, delta, 2 * us, 2 * us, m, m);
      if (base == -kInf) continue;
      CHECK(log_likelihood_k(gk, a * phi, a * delta + b, 2 * us, 2 * us, m, m) ==
            doctest::Approx(base - 2.0 * p * std::log(a)).epsilon(1e-9));
      CHECK(log_likelihood_s(gs, a * phi, 2 * us + b / phi, a * delta + c, m, m) ==
            doctest::Approx(base - 2.0 * p * std::log(a)).epsilon(1e-9));
    }
  }
}

TEST_CASE("feasible delta interval") {
  const auto m = DelayModel::exponential(1e6);
  const auto ts = generate_exchange({1.0, 2 * us, 2 * us, 2 * us}, draw(m, 5, 7),
                                    Schedule::periodic(5));
  const auto j = feasible_delta(ts, 1.0, 2 * us, 2 * us, m.support(), m.support());
  REQUIRE(!j.empty());
  CHECK(j.contains(2 * us));
  const double eps = 1e-15;
  CHECK(std::isfinite(log_likelihood_k(ts, 1.0, j.lo + eps, 2 * us, 2 * us, m, m)));
  CHECK(std::isfinite(log_likelihood_k(ts, 1.0, j.hi - eps, 2 * us, 2 * us, m, m)));
  CHECK(log_likelihood_k(ts, 1.0, j.lo - 1e-9, 2 * us, 2 * us, m, m) == -kInf);
  CHECK(log_likelihood_k(ts, 1.0, j.hi + 1e-9, 2 * us, 2 * us, m, m) == -kInf);
}

TEST_CASE("exchange file round trip") {
  const auto m = DelayModel::exponential(1e6);
  const ClockParams cp{1.00001, 2 * us, 2 * us, 2 * us};
  const auto ts = generate_exchange(cp, draw(m, 4, 8), Schedule::periodic(4));
  std::stringstream ss;
  write_exchange(ss, ts, cp);
  const auto f = read_exchange(ss);
  CHECK(f.ts.t1 == ts.t1);
  CHECK(f.ts.t2 == ts.t2);
  CHECK(f.ts.t3 == ts.t3);
  CHECK(f.ts.t4 == ts.t4);
  REQUIRE(f.truth);
  CHECK(f.truth->phi == cp.phi);
  std::istringstream bad("t1 t2\n");
  CHECK_THROWS_AS(read_exchange(bad), ParseError);
}
