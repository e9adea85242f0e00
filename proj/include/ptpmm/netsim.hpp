#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ptpmm/rng.hpp"

namespace ptpmm {

enum class TrafficKind { kTm1, kTm2, kEgTm1 };

struct TrafficModel {
  TrafficKind kind = TrafficKind::kTm1;
  std::vector<double> sizes_bytes;  // background packet sizes
  std::vector<double> shares;       // fraction of packets per size
  // EG-TM1 only: fixed-schedule batches of low-priority packets.
  double fs_period_s = 0.0;
  double fs_packet_bytes = 0.0;
  int fs_max_batch = 0;
  // EG-TM1 only: optional extra event-driven load sharing the probe class.
  double ed_extra_load = 0.0;

  static TrafficModel tm1();
  static TrafficModel tm2();
  static TrafficModel eg_tm1();
  double mean_size_bytes() const;
  void validate() const;
};

std::string to_string(TrafficKind kind);
TrafficModel parse_traffic(const std::string& name);  // tm1, tm2, eg-tm1

struct NetworkConfig {
  double line_rate_bps = 1e9;
  int switches = 10;
  double load = 0.4;  // background share of line rate, [0, 1)
  TrafficModel traffic = TrafficModel::tm1();
  double sync_packet_bytes = 64.0;
  double warmup_s = 0.05;
  std::uint64_t seed = 1;
  std::size_t max_queue = 1'000'000;  // waiting packets per switch before giving up

  void validate() const;
};

inline constexpr double kProbeInterval = 40e-6;

struct SwitchStats {
  double window_s = 0.0;          // measurement window after warm-up
  double background_bits = 0.0;   // background bits whose service ended inside it
  std::size_t background_packets = 0;
  std::size_t max_waiting = 0;
  std::vector<double> fs_arrivals;  // batch instants (EG-TM1)

  double achieved_load(double line_rate_bps) const {
    return window_s > 0.0 ? background_bits / (window_s * line_rate_bps) : 0.0;
  }
};

struct PathResult {
  std::vector<double> delays;  // per probe, s: queuing only, service excluded
  std::vector<SwitchStats> switches;
};

// Probes leave the source every probe_interval seconds after the warm-up and
// cross the cascade; each switch serves its own Poisson background plus the
// probes in a non-preemptive priority queue. Per-switch randomness is drawn
// from `rng`.
PathResult simulate_path(const NetworkConfig& cfg, std::size_t n_probes, double probe_interval,
                         Rng& rng);

std::vector<double> simulate_path_delays(const NetworkConfig& cfg, std::size_t n_probes,
                                         double probe_interval, Rng& rng);

// Training trace from its own stream, independent of any test draws keyed by
// the same config seed.
std::vector<double> collect_training_trace(const NetworkConfig& cfg, std::size_t n, Rng& rng);

// "# netsim v1" then "# key=value" lines, then one delay (s) per line.
void write_trace(std::ostream& out, const NetworkConfig& cfg, const std::vector<double>& delays);
std::vector<double> read_trace(std::istream& in);

}  // namespace ptpmm
