#include "ptpmm/netsim.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "ptpmm/errors.hpp"
#include "text_util.hpp"

namespace ptpmm {

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

enum Class : int { kProbeClass = 0, kBackgroundClass = 1, kFsClass = 2 };

struct Packet {
  double arrival;
  double service;
  int cls;
  long probe;  // index, or -1
};

// One switch: non-preemptive priority server, FIFO within a class.
class Switch {
 public:
  Switch(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    const TrafficModel& tm = cfg.traffic;
    sizes_ = std::discrete_distribution<std::size_t>(tm.shares.begin(), tm.shares.end());
    const double bg_rate = cfg.load * cfg.line_rate_bps / (8.0 * tm.mean_size_bytes());
    if (bg_rate > 0.0) bg_gap_ = std::exponential_distribution<double>(bg_rate);
    has_bg_ = bg_rate > 0.0;
    const double ed_rate =
        tm.ed_extra_load * cfg.line_rate_bps / (8.0 * cfg.sync_packet_bytes);
    if (ed_rate > 0.0) ed_gap_ = std::exponential_distribution<double>(ed_rate);
    has_ed_ = ed_rate > 0.0;
  }

  // Runs the switch for the given probe arrival times (increasing). Returns
  // per-probe waiting times and writes departures back into `times`.
  std::vector<double> run(std::vector<double>& times, SwitchStats& stats) {
    const TrafficModel& tm = cfg_.traffic;
    const double rate = cfg_.line_rate_bps;
    const double probe_service = 8.0 * cfg_.sync_packet_bytes / rate;
    const double horizon = times.empty() ? 0.0 : times.back();
    const double window_lo = cfg_.warmup_s;
    stats.window_s = std::max(0.0, horizon - window_lo);

    double next_bg = has_bg_ ? bg_gap_(rng_) : kNever;
    double next_ed = has_ed_ ? ed_gap_(rng_) : kNever;
    int fs_k = 1;
    double next_fs = tm.fs_period_s > 0.0 ? tm.fs_period_s : kNever;
    std::uniform_int_distribution<int> batch(1, std::max(1, tm.fs_max_batch));

    std::array<std::deque<Packet>, 3> queue;
    std::size_t waiting = 0;
    std::size_t ip = 0;
    double t_free = 0.0;
    double last_start = -kNever;
    std::vector<double> waits(times.size(), 0.0);
    std::vector<Packet> arrivals;

    auto serve = [&](const Packet& pkt, double start) {
      if (start < last_start || start < pkt.arrival) {
        throw std::logic_error("switch served a packet out of order");
      }
      last_start = start;
      t_free = start + pkt.service;
      if (pkt.probe >= 0) {
        const auto i = static_cast<std::size_t>(pkt.probe);
        waits[i] = start - pkt.arrival;
        times[i] = t_free;
      } else if (pkt.cls == kBackgroundClass && t_free > window_lo && t_free <= horizon) {
        stats.background_bits += pkt.service * rate;
        ++stats.background_packets;
      }
    };

    while (true) {
      const double t_probe = ip < times.size() ? times[ip] : kNever;
      const double t_bg = next_bg <= horizon ? next_bg : kNever;
      const double t_ed = next_ed <= horizon ? next_ed : kNever;
      const double t_fs = next_fs <= horizon ? next_fs : kNever;
      const double ta = std::min({t_probe, t_bg, t_ed, t_fs});

      if (waiting > 0 && t_free < ta) {
        for (auto& q : queue) {
          if (q.empty()) continue;
          const Packet pkt = q.front();
          q.pop_front();
          --waiting;
          // Work conservation: the head of the queue starts the instant the
          // server frees up.
          serve(pkt, t_free);
          break;
        }
        continue;
      }
      if (ta == kNever) break;

      arrivals.clear();
      if (ta == t_probe) {
        arrivals.push_back({ta, probe_service, kProbeClass, static_cast<long>(ip)});
        ++ip;
      } else if (ta == t_ed) {
        arrivals.push_back({ta, probe_service, kProbeClass, -1});
        next_ed += ed_gap_(rng_);
      } else if (ta == t_bg) {
        const double bytes = tm.sizes_bytes[sizes_(rng_)];
        arrivals.push_back({ta, 8.0 * bytes / rate, kBackgroundClass, -1});
        next_bg += bg_gap_(rng_);
      } else {
        stats.fs_arrivals.push_back(ta);
        const int n = batch(rng_);
        for (int j = 0; j < n; ++j) {
          arrivals.push_back({ta, 8.0 * tm.fs_packet_bytes / rate, kFsClass, -1});
        }
        ++fs_k;
        next_fs = tm.fs_period_s * static_cast<double>(fs_k);
      }
      for (const Packet& pkt : arrivals) {
        if (waiting == 0 && t_free <= pkt.arrival) {
          serve(pkt, pkt.arrival);
        } else {
          queue[static_cast<std::size_t>(pkt.cls)].push_back(pkt);
          ++waiting;
          stats.max_waiting = std::max(stats.max_waiting, waiting);
          if (waiting > cfg_.max_queue) {
            throw UnstableLoad("switch queue exceeded " + std::to_string(cfg_.max_queue) +
                               " packets; load too high to reach steady state");
          }
        }
      }
    }
    return waits;
  }

 private:
  const NetworkConfig& cfg_;
  Rng rng_;
  std::discrete_distribution<std::size_t> sizes_;
  std::exponential_distribution<double> bg_gap_, ed_gap_;
  bool has_bg_ = false, has_ed_ = false;
};

}  // namespace

TrafficModel TrafficModel::tm1() {
  TrafficModel t;
  t.kind = TrafficKind::kTm1;
  t.sizes_bytes = {64, 576, 1518};
  t.shares = {0.80, 0.05, 0.15};
  return t;
}

TrafficModel TrafficModel::tm2() {
  TrafficModel t;
  t.kind = TrafficKind::kTm2;
  t.sizes_bytes = {64, 576, 1518};
  t.shares = {0.30, 0.10, 0.60};
  return t;
}

TrafficModel TrafficModel::eg_tm1() {
  TrafficModel t = tm1();
  t.kind = TrafficKind::kEgTm1;
  t.fs_period_s = 1.0;
  t.fs_packet_bytes = 512;
  t.fs_max_batch = 100;
  return t;
}

double TrafficModel::mean_size_bytes() const {
  return std::inner_product(sizes_bytes.begin(), sizes_bytes.end(), shares.begin(), 0.0);
}

void TrafficModel::validate() const {
  if (sizes_bytes.empty() || sizes_bytes.size() != shares.size()) {
    throw InvalidArgument("traffic model needs one share per packet size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    if (!(sizes_bytes[i] > 0.0) || !(shares[i] >= 0.0)) {
      throw InvalidArgument("traffic sizes must be positive and shares non-negative");
    }
    sum += shares[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("traffic shares must sum to 1");
  if (kind == TrafficKind::kEgTm1 &&
      (!(fs_period_s > 0.0) || !(fs_packet_bytes > 0.0) || fs_max_batch < 1)) {
    throw InvalidArgument("EG-TM1 needs a positive FS period, size and batch bound");
  }
  if (!(ed_extra_load >= 0.0)) throw InvalidArgument("extra ED load must be non-negative");
}

std::string to_string(TrafficKind kind) {
  switch (kind) {
    case TrafficKind::kTm1: return "tm1";
    case TrafficKind::kTm2: return "tm2";
    case TrafficKind::kEgTm1: return "eg-tm1";
  }
  return "unknown";
}

TrafficModel parse_traffic(const std::string& name) {
  if (name == "tm1") return TrafficModel::tm1();
  if (name == "tm2") return TrafficModel::tm2();
  if (name == "eg-tm1") return TrafficModel::eg_tm1();
  throw InvalidArgument("unknown traffic model '" + name + "'");
}

void NetworkConfig::validate() const {
  traffic.validate();
  if (!(line_rate_bps > 0.0)) throw InvalidArgument("line rate must be positive");
  if (switches < 1) throw InvalidArgument("need at least one switch");
  if (!(load >= 0.0 && load < 1.0)) throw InvalidArgument("load factor must be in [0, 1)");
  if (!(load + traffic.ed_extra_load < 1.0)) throw InvalidArgument("total load must stay below 1");
  if (!(sync_packet_bytes > 0.0)) throw InvalidArgument("sync packet size must be positive");
  if (!(warmup_s >= 0.0)) throw InvalidArgument("warm-up must be non-negative");
  if (max_queue < 1) throw InvalidArgument("queue cap must be positive");
}

PathResult simulate_path(const NetworkConfig& cfg, std::size_t n_probes, double probe_interval,
                         Rng& rng) {
  cfg.validate();
  if (!(probe_interval > 0.0)) throw InvalidArgument("probe interval must be positive");
  PathResult out;
  out.delays.assign(n_probes, 0.0);
  std::vector<double> times(n_probes);
  for (std::size_t i = 0; i < n_probes; ++i) {
    times[i] = cfg.warmup_s + static_cast<double>(i) * probe_interval;
  }
  for (int k = 0; k < cfg.switches; ++k) {
    Switch sw(cfg, rng());
    SwitchStats stats;
    const std::vector<double> waits = sw.run(times, stats);
    for (std::size_t i = 0; i < n_probes; ++i) out.delays[i] += waits[i];
    out.switches.push_back(std::move(stats));
  }
  return out;
}

std::vector<double> simulate_path_delays(const NetworkConfig& cfg, std::size_t n_probes,
                                         double probe_interval, Rng& rng) {
  return simulate_path(cfg, n_probes, probe_interval, rng).delays;
}

std::vector<double> collect_training_trace(const NetworkConfig& cfg, std::size_t n, Rng& rng) {
  cfg.validate();
  if (n == 0) return {};
  Rng train(derive_seed(rng(), Stream::kTraining));
  return simulate_path_delays(cfg, n, kProbeInterval, train);
}

void write_trace(std::ostream& out, const NetworkConfig& cfg, const std::vector<double>& delays) {
  using detail::fmt17;
  out << "# netsim v1\n";
  out << "# traffic=" << to_string(cfg.traffic.kind) << '\n';
  out << "# load=" << fmt17(cfg.load) << '\n';
  out << "# switches=" << cfg.switches << '\n';
  out << "# line_rate_bps=" << fmt17(cfg.line_rate_bps) << '\n';
  out << "# sync_packet_bytes=" << fmt17(cfg.sync_packet_bytes) << '\n';
  out << "# warmup_s=" << fmt17(cfg.warmup_s) << '\n';
  out << "# ed_extra_load=" << fmt17(cfg.traffic.ed_extra_load) << '\n';
  out << "# seed=" << cfg.seed << '\n';
  for (double d : delays) out << fmt17(d) << '\n';
}

std::vector<double> read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "# netsim v1") {
    throw ParseError("missing '# netsim v1' header");
  }
  std::vector<double> out;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(detail::parse_double(t));
  }
  return out;
}

}  // namespace ptpmm
