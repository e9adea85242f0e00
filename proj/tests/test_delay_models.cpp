#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "doctest.h"
#include "oracles.hpp"
#include "ptpmm/delay_models.hpp"
#include "ptpmm/errors.hpp"

using namespace ptpmm;

namespace {

constexpr double us = 1e-6;

std::vector<double> exp_samples(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return DelayModel::exponential(1e6).sample(rng, n);
}

DelayModel kde_model() {
  Rng rng(11);
  auto xs = DelayModel::gamma(2.0, us).sample(rng, 20000);
  return fit_empirical(xs, FitMethod::kKde);
}

DelayModel hist_model() { return fit_empirical(exp_samples(100000, 3), FitMethod::kHistogram); }

std::vector<DelayModel> all_kinds() {
  return {DelayModel::exponential(1e6), DelayModel::gamma(2.0, us),
          DelayModel::gaussian(5 * us, us), kde_model(), hist_model()};
}

// Mass of exp(log_density) over the support by composite Gauss-Legendre.
double total_mass(const DelayModel& m) {
  auto f = [&](double w) { return std::exp(m.log_density(w)); };
  switch (m.kind()) {
    case DelayKind::kExponential:
    case DelayKind::kGamma:
      return oracle::integrate(f, 0.0, 80 * us, 4000);
    case DelayKind::kGaussian:
      return oracle::integrate(f, m.mean() - 14 * m.stddev(), m.mean() + 14 * m.stddev(), 2000);
    case DelayKind::kKde:
      return oracle::integrate(f, m.support().lo, m.support().hi, 20000);
    case DelayKind::kHistogram: {
      const auto& h = std::get<EmpiricalHistogram>(m.params());
      double sum = 0.0;
      for (std::size_t k = 0; k + 1 < h.edges.size(); ++k)
        sum += oracle::integrate(f, h.edges[k], h.edges[k + 1], 1);
      return sum;
    }
  }
  return 0.0;
}

double ks_distance(std::vector<double> xs, const DelayModel& m) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = m.cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

}  // namespace

TEST_CASE("exponential log density") {
  const auto m = DelayModel::exponential(1e6);
  CHECK(m.log_density(0.0) == doctest::Approx(std::log(1e6)).epsilon(1e-15));
  CHECK(m.log_density(-us) == -kInf);
  CHECK(m.support().lo == 0.0);
  CHECK(m.support().hi == kInf);
}

TEST_CASE("parametric closed forms") {
  const auto e = DelayModel::exponential(2e6);
  for (double w : {0.0, 0.3 * us, 2 * us, 9 * us}) {
    CHECK(e.log_density(w) == doctest::Approx(std::log(2e6) - 2e6 * w).epsilon(1e-12));
    CHECK(e.cdf(w) == doctest::Approx(-std::expm1(-2e6 * w)).epsilon(1e-12));
  }
  const auto g = DelayModel::gamma(2.5, us);
  for (double w : {0.1 * us, us, 4 * us}) {
    const double ref = 1.5 * std::log(w) - w / us - std::lgamma(2.5) - 2.5 * std::log(us);
    CHECK(g.log_density(w) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(g.cdf(w) == doctest::Approx(boost::math::gamma_p(2.5, w / us)).epsilon(1e-12));
  }
  CHECK(g.mean() == doctest::Approx(2.5 * us).epsilon(1e-12));
  const auto n = DelayModel::gaussian(3 * us, 0.5 * us);
  const double z = (2 * us - 3 * us) / (0.5 * us);
  CHECK(n.log_density(2 * us) ==
        doctest::Approx(-0.5 * z * z - std::log(0.5 * us) - 0.5 * std::log(2 * M_PI))
            .epsilon(1e-12));
}

TEST_CASE("sample moments") {
  Rng rng(1);
  const auto e = DelayModel::exponential(1e6).sample(rng, 1000000);
  double mean = 0.0;
  for (double x : e) mean += x;
  mean /= static_cast<double>(e.size());
  CHECK(std::abs(mean - us) < 0.01 * us);

  const auto g = DelayModel::gamma(2.0, us).sample(rng, 1000000);
  double m1 = 0.0, m2 = 0.0;
  for (double x : g) m1 += x;
  m1 /= static_cast<double>(g.size());
  for (double x : g) m2 += (x - m1) * (x - m1);
  m2 /= static_cast<double>(g.size() - 1);
  CHECK(std::abs(m2 - 2 * us * us) < 0.02 * 2 * us * us);

  CHECK(DelayModel::gamma(2.0, us).sample(rng, 0).empty());
}

TEST_CASE("histogram fit tracks the exponential density") {
  const auto h = hist_model();
  CHECK(std::abs(h.log_density(us) - (std::log(1e6) - 1.0)) < 0.1);
  const auto& p = std::get<EmpiricalHistogram>(h.params());
  double sum = 0.0;
  for (double m : p.masses) sum += m;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("degenerate and invalid fits") {
  const std::vector<double> same(10, 2 * us);
  CHECK_THROWS_AS(fit_empirical(same, FitMethod::kKde), DegenerateFit);
  CHECK_THROWS_AS(fit_empirical(same, FitMethod::kHistogram), DegenerateFit);
  CHECK_THROWS_AS(fit_empirical(std::vector<double>{}, FitMethod::kKde), InvalidArgument);
  CHECK_THROWS_AS(DelayModel::exponential(-1.0), InvalidArgument);
  CHECK_THROWS_AS(DelayModel::histogram({0.0, 1.0}, {0.5}), InvalidArgument);
}

TEST_CASE("kde on gamma samples matches the gamma law") {
  const auto k = kde_model();
  double d = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double w = 15 * us * i / 2000.0;
    d = std::max(d, std::abs(k.cdf(w) - boost::math::gamma_p(2.0, w / us)));
  }
  CHECK(d < 0.02);
}

TEST_CASE("supports") {
  const auto h = DelayModel::histogram({0.0, us, 2 * us}, {0.25, 0.75});
  CHECK(h.support().lo == 0.0);
  CHECK(h.support().hi == 2 * us);
  const auto k = DelayModel::kde({3 * us, 5 * us, 9 * us}, 0.5 * us);
  CHECK(k.support().lo == 0.0);
  CHECK(k.support().hi == doctest::Approx(12 * us).epsilon(1e-12));
  CHECK(k.log_density(12.5 * us) == -kInf);
}

TEST_CASE("every kind is normalized") {
  for (const auto& m : all_kinds()) {
    CAPTURE(to_string(m.kind()));
    CHECK(std::abs(total_mass(m) - 1.0) < 1e-6);
  }
}

TEST_CASE("sampling agrees with the cdf") {
  for (const auto& m : all_kinds()) {
    CAPTURE(to_string(m.kind()));
    Rng rng(99);
    CHECK(ks_distance(m.sample(rng, 20000), m) < 0.02);
  }
}

TEST_CASE("samples and cdf live on the support") {
  for (const auto& m : all_kinds()) {
    CAPTURE(to_string(m.kind()));
    Rng rng(5);
    for (double x : m.sample(rng, 5000)) {
      CHECK(m.support().contains(x));
      CHECK(m.log_density(x) > -kInf);
    }
    const auto s = m.support();
    if (std::isfinite(s.lo)) {
      CHECK(m.log_density(s.lo - us) == -kInf);
      CHECK(m.cdf(s.lo - us) == 0.0);
    }
    if (std::isfinite(s.hi)) {
      CHECK(m.log_density(s.hi + us) == -kInf);
      CHECK(m.cdf(s.hi + us) == 1.0);
    }
  }
}

TEST_CASE("cdf and quantile are inverse") {
  for (const auto& m : all_kinds()) {
    CAPTURE(to_string(m.kind()));
    double prev = -kInf;
    for (double p : {0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99}) {
      const double q = m.quantile(p);
      CHECK(q >= prev);
      prev = q;
      CHECK(m.cdf(q) == doctest::Approx(p).epsilon(1e-8));
    }
  }
}

TEST_CASE("serialization round trip is bit exact") {
  for (const auto& m : all_kinds()) {
    CAPTURE(to_string(m.kind()));
    std::stringstream ss;
    write_delay_model(ss, m);
    const auto r = read_delay_model(ss);
    CHECK(r.kind() == m.kind());
    CHECK(r.support().lo == m.support().lo);
    CHECK(r.support().hi == m.support().hi);
    for (double w : {0.0, 0.4 * us, us, 3 * us, 7 * us}) {
      CHECK(r.log_density(w) == m.log_density(w));
      CHECK(r.cdf(w) == m.cdf(w));
    }
    Rng a(3), b(3);
    CHECK(r.sample(a, 100) == m.sample(b, 100));
  }
}

TEST_CASE("malformed model files") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_delay_model(empty), ParseError);
  std::istringstream bad("# delay-model v1 banana\n");
  CHECK_THROWS_AS(read_delay_model(bad), ParseError);
}
