#include "ptpmm/exchange.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ptpmm/errors.hpp"
#include "text_util.hpp"

namespace ptpmm {

namespace {

void require_phi(double phi) {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw InvalidArgument("skew phi must be positive");
}

void require_sizes(const TimestampSet& ts) {
  const std::size_t p = ts.t1.size();
  if (ts.t2.size() != p || ts.t3.size() != p || ts.t4.size() != p) {
    throw InvalidArgument("timestamp vectors differ in length");
  }
}

}  // namespace

void TimestampSet::validate() const {
  require_sizes(*this);
  if (t1.empty()) throw InvalidArgument("timestamp set needs at least one round");
  for (std::size_t i = 0; i < t1.size(); ++i) {
    if (!std::isfinite(t1[i]) || !std::isfinite(t2[i]) || !std::isfinite(t3[i]) ||
        !std::isfinite(t4[i])) {
      throw InvalidArgument("timestamps must be finite");
    }
    if (i > 0 && !(t1[i] > t1[i - 1])) throw InvalidArgument("t1 must be strictly increasing");
  }
}

Schedule Schedule::periodic(std::size_t rounds, double interval, double t3_offset,
                            T3Clock clock) {
  Schedule s;
  s.t1.resize(rounds);
  for (std::size_t i = 0; i < rounds; ++i) s.t1[i] = static_cast<double>(i) * interval;
  s.t3_offset = t3_offset;
  s.t3_clock = clock;
  return s;
}

TimestampSet generate_exchange(const ClockParams& params, const DelayTrace& trace,
                               const Schedule& schedule) {
  require_phi(params.phi);
  const std::size_t p = schedule.t1.size();
  if (trace.w1.size() != p || trace.w2.size() != p) {
    throw InvalidArgument("delay trace length does not match the schedule");
  }
  TimestampSet ts;
  ts.t1 = schedule.t1;
  ts.t2.resize(p);
  ts.t3.resize(p);
  ts.t4.resize(p);
  const double phi = params.phi, delta = params.delta;
  for (std::size_t i = 0; i < p; ++i) {
    ts.t2[i] = (ts.t1[i] + params.d_ms + trace.w1[i]) * phi + delta;
    if (schedule.t3_clock == T3Clock::kSlave) {
      ts.t3[i] = ts.t1[i] + schedule.t3_offset;
      ts.t4[i] = (ts.t3[i] - delta) / phi + params.d_sm + trace.w2[i];
    } else {
      const double tau = ts.t1[i] + schedule.t3_offset;
      ts.t3[i] = phi * tau + delta;
      ts.t4[i] = tau + params.d_sm + trace.w2[i];
    }
  }
  return ts;
}

DelayTrace implied_delays(const TimestampSet& ts, double phi, double delta, double d_ms,
                          double d_sm) {
  require_phi(phi);
  require_sizes(ts);
  DelayTrace out;
  out.w1.resize(ts.size());
  out.w2.resize(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out.w1[i] = (ts.t2[i] - delta) / phi - d_ms - ts.t1[i];
    out.w2[i] = (delta - ts.t3[i]) / phi - d_sm + ts.t4[i];
  }
  return out;
}

double log_likelihood_k(const TimestampSet& ts, double phi, double delta, double d_ms,
                        double d_sm, const DelayModel& fwd, const DelayModel& rev) {
  require_phi(phi);
  require_sizes(ts);
  const std::size_t p = ts.size();
  double sum = -2.0 * static_cast<double>(p) * std::log(phi);
  for (std::size_t i = 0; i < p; ++i) {
    sum += fwd.log_density((ts.t2[i] - delta) / phi - d_ms - ts.t1[i]);
    if (sum == -kInf) return sum;
    sum += rev.log_density((delta - ts.t3[i]) / phi - d_sm + ts.t4[i]);
    if (sum == -kInf) return sum;
  }
  return sum;
}

double log_likelihood_s(const TimestampSet& ts, double phi, double d, double delta,
                        const DelayModel& fwd, const DelayModel& rev) {
  return log_likelihood_k(ts, phi, delta, d, d, fwd, rev);
}

SupportInterval feasible_delta(const TimestampSet& ts, double phi, double d_ms, double d_sm,
                               const SupportInterval& fwd, const SupportInterval& rev) {
  require_phi(phi);
  require_sizes(ts);
  SupportInterval out{-kInf, kInf};
  for (std::size_t i = 0; i < ts.size(); ++i) {
    // w1 in [fwd.lo, fwd.hi]
    out.lo = std::max(out.lo, ts.t2[i] - phi * (fwd.hi + d_ms + ts.t1[i]));
    out.hi = std::min(out.hi, ts.t2[i] - phi * (fwd.lo + d_ms + ts.t1[i]));
    // w2 in [rev.lo, rev.hi]
    out.lo = std::max(out.lo, ts.t3[i] + phi * (rev.lo + d_sm - ts.t4[i]));
    out.hi = std::min(out.hi, ts.t3[i] + phi * (rev.hi + d_sm - ts.t4[i]));
  }
  return out;
}

TimestampSet transform_k(const TimestampSet& ts, double a, double b) {
  require_phi(a);
  TimestampSet out = ts;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out.t2[i] = a * ts.t2[i] + b;
    out.t3[i] = a * ts.t3[i] + b;
  }
  return out;
}

TimestampSet transform_s(const TimestampSet& ts, double a, double b, double c) {
  require_phi(a);
  TimestampSet out = ts;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out.t2[i] = a * (ts.t2[i] + b) + c;
    out.t3[i] = a * (ts.t3[i] - b) + c;
  }
  return out;
}

void write_exchange(std::ostream& out, const TimestampSet& ts,
                    const std::optional<ClockParams>& truth) {
  using detail::fmt17;
  require_sizes(ts);
  out << "# exchange v1\n";
  if (truth) {
    out << "# phi=" << fmt17(truth->phi) << " delta=" << fmt17(truth->delta)
        << " d_ms=" << fmt17(truth->d_ms) << " d_sm=" << fmt17(truth->d_sm) << '\n';
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out << fmt17(ts.t1[i]) << ' ' << fmt17(ts.t2[i]) << ' ' << fmt17(ts.t3[i]) << ' '
        << fmt17(ts.t4[i]) << '\n';
  }
}

ExchangeFile read_exchange(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "# exchange v1") {
    throw ParseError("missing '# exchange v1' header");
  }
  ExchangeFile file;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (t.find("phi=") == std::string::npos) continue;
      ClockParams cp;
      for (const auto& tok : detail::split_ws(t.substr(1))) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const double v = detail::parse_double(tok.substr(eq + 1));
        if (key == "phi") cp.phi = v;
        else if (key == "delta") cp.delta = v;
        else if (key == "d_ms") cp.d_ms = v;
        else if (key == "d_sm") cp.d_sm = v;
      }
      file.truth = cp;
      continue;
    }
    const auto cols = detail::split_ws(t);
    if (cols.size() != 4) throw ParseError("exchange row needs four columns: '" + t + "'");
    file.ts.t1.push_back(detail::parse_double(cols[0]));
    file.ts.t2.push_back(detail::parse_double(cols[1]));
    file.ts.t3.push_back(detail::parse_double(cols[2]));
    file.ts.t4.push_back(detail::parse_double(cols[3]));
  }
  file.ts.validate();
  return file;
}

}  // namespace ptpmm
