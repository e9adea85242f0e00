#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ptpmm/delay_models.hpp"

namespace ptpmm {

inline constexpr double kRoundInterval = 40e-6;
inline constexpr double kT3Offset = 20e-6;

struct ClockParams {
  double phi = 1.0;
  double delta = 0.0;  // s
  double d_ms = 0.0;   // s
  double d_sm = 0.0;   // s
};

struct DelayTrace {
  std::vector<double> w1;  // forward, s
  std::vector<double> w2;  // reverse, s
};

struct TimestampSet {
  std::vector<double> t1, t2, t3, t4;

  std::size_t size() const noexcept { return t1.size(); }
  // Equal lengths, P >= 1, finite values, t1 strictly increasing.
  void validate() const;
};

// Which clock the nominal t3 = t1 + offset schedule is read on.
//   kSlave:  t3 is the slave's send stamp as given; t4 follows from it.
//   kMaster: the send instant is t1 + offset on the master axis, so
//            t3 = phi * tau + delta and t4 = tau + d_sm + w2.
// Only kMaster makes a change of (phi, delta) act on [t2, t3] as an exact
// affine map for fixed delay draws.
enum class T3Clock { kSlave, kMaster };

struct Schedule {
  std::vector<double> t1;  // s, master clock
  double t3_offset = kT3Offset;
  T3Clock t3_clock = T3Clock::kSlave;

  // t1 = i * interval for i = 0..rounds-1.
  static Schedule periodic(std::size_t rounds, double interval = kRoundInterval,
                           double t3_offset = kT3Offset, T3Clock clock = T3Clock::kSlave);
};

TimestampSet generate_exchange(const ClockParams& params, const DelayTrace& trace,
                               const Schedule& schedule);

// Delays implied by the observations at a candidate parameter.
DelayTrace implied_delays(const TimestampSet& ts, double phi, double delta, double d_ms,
                          double d_sm);

double log_likelihood_k(const TimestampSet& ts, double phi, double delta, double d_ms,
                        double d_sm, const DelayModel& fwd, const DelayModel& rev);

double log_likelihood_s(const TimestampSet& ts, double phi, double d, double delta,
                        const DelayModel& fwd, const DelayModel& rev);

// Offsets delta keeping every implied delay inside the given supports at
// fixed phi. Empty (lo > hi) when no such offset exists.
SupportInterval feasible_delta(const TimestampSet& ts, double phi, double d_ms, double d_sm,
                               const SupportInterval& fwd, const SupportInterval& rev);

// K-model group action: t2, t3 -> a * t + b.
TimestampSet transform_k(const TimestampSet& ts, double a, double b);
// S-model group action: t2 -> a (t2 + b) + c, t3 -> a (t3 - b) + c.
TimestampSet transform_s(const TimestampSet& ts, double a, double b, double c);

struct ExchangeFile {
  TimestampSet ts;
  std::optional<ClockParams> truth;
};

// "# exchange v1" header, optional "# phi=... delta=... d_ms=... d_sm=..."
// line, then "t1 t2 t3 t4" rows in seconds.
void write_exchange(std::ostream& out, const TimestampSet& ts,
                    const std::optional<ClockParams>& truth = std::nullopt);
ExchangeFile read_exchange(std::istream& in);

}  // namespace ptpmm
