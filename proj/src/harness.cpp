#include "ptpmm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "ptpmm/errors.hpp"
#include "text_util.hpp"

namespace ptpmm {

namespace {

std::string format10(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

Estimate run_scheme(Scheme s, const TimestampSet& ts, const ClockParams& truth,
                    const DelayModel& model, const ExperimentConfig& cfg) {
  switch (s) {
    case Scheme::kGmle: return gmle(ts, truth.d_ms, truth.d_sm, model.mean());
    case Scheme::kLmle: return lmle(ts, truth.d_ms, truth.d_sm, model, model);
    case Scheme::kMinimaxK: return minimax_k(ts, truth.d_ms, truth.d_sm, model, model, cfg.quad_k);
    case Scheme::kMinimaxS: return minimax_s(ts, model, model, cfg.quad_s);
  }
  throw InvalidArgument("unknown scheme");
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments mean_se(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

}  // namespace

std::string to_string(FitOption f) {
  switch (f) {
    case FitOption::kExact: return "exact";
    case FitOption::kKde: return "kde";
    case FitOption::kHistogram: return "histogram";
  }
  return "unknown";
}

FitOption parse_fit(const std::string& name) {
  if (name == "exact") return FitOption::kExact;
  if (name == "kde") return FitOption::kKde;
  if (name == "histogram") return FitOption::kHistogram;
  throw InvalidArgument("unknown fit option '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw InvalidArgument("need at least one trial");
  if (train_seed == test_seed) throw InvalidArgument("train and test seeds must differ");
  if (p_sweep.empty()) throw InvalidArgument("P sweep is empty");
  for (std::size_t p : p_sweep) {
    if (p < 1) throw InvalidArgument("P must be positive");
  }
  if (schemes.empty()) throw InvalidArgument("no schemes selected");
  if (!(truth.phi > 0.0)) throw InvalidArgument("true skew must be positive");
  if (!parametric) {
    if (loads.empty()) throw InvalidArgument("no loads given");
    NetworkConfig n = network;
    for (double l : loads) {
      n.load = l;
      n.validate();
    }
    if (effective_fit() == FitOption::kExact) {
      throw InvalidArgument("network sources have no exact delay model; use kde or histogram");
    }
  }
  if (effective_fit() != FitOption::kExact && training_size < 2) {
    throw InvalidArgument("training trace needs at least two samples");
  }
  quad_k.validate();
  quad_s.validate();
}

FitOption ExperimentConfig::effective_fit() const {
  if (fit) return *fit;
  return parametric ? FitOption::kExact : FitOption::kKde;
}

std::string ExperimentConfig::source_label(std::size_t i) const {
  if (parametric) return model_id;
  return format10(loads.at(i));
}

DelayModel fit_training_model(const TaggedSamples& samples, FitOption fit, std::size_t bins) {
  if (samples.stream != Stream::kTraining) {
    throw InvalidArgument("delay model fits may only use training-stream samples");
  }
  switch (fit) {
    case FitOption::kKde: return fit_empirical(samples.values, FitMethod::kKde);
    case FitOption::kHistogram: return fit_empirical(samples.values, FitMethod::kHistogram, bins);
    case FitOption::kExact: break;
  }
  throw InvalidArgument("exact models are not fitted");
}

std::size_t worker_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("PTPMM_THREADS")) n = std::strtoull(env, nullptr, 10);
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

ExperimentData run_trials(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t sources = cfg.source_count();
  const std::size_t max_p = *std::max_element(cfg.p_sweep.begin(), cfg.p_sweep.end());
  const std::size_t ns = cfg.schemes.size();
  ExperimentData data;
  data.records.resize(sources);

  for (std::size_t src = 0; src < sources; ++src) {
    NetworkConfig net = cfg.network;
    if (!cfg.parametric) net.load = cfg.loads[src];

    // Fit on the training stream only.
    const FitOption fit = cfg.effective_fit();
    std::optional<DelayModel> model;
    if (fit == FitOption::kExact) {
      model = *cfg.parametric;
    } else {
      Rng train(derive_seed(cfg.train_seed, Stream::kTraining, src));
      TaggedSamples samples{Stream::kTraining, {}};
      samples.values = cfg.parametric ? cfg.parametric->sample(train, cfg.training_size)
                                      : collect_training_trace(net, cfg.training_size, train);
      model = fit_training_model(samples, fit, cfg.histogram_bins);
    }
    data.fitted.push_back(*model);

    auto& cell = data.records[src];
    cell.assign(cfg.p_sweep.size(), std::vector<TrialRecord>(cfg.trials));
    const std::uint64_t test_root = derive_seed(cfg.test_seed, Stream::kTest, src);

    auto one_trial = [&](std::size_t t) {
      DelayTrace full;
      try {
        Rng fw(derive_seed(test_root, Stream::kForward, t));
        Rng rv(derive_seed(test_root, Stream::kReverse, t));
        if (cfg.parametric) {
          full.w1 = cfg.parametric->sample(fw, max_p);
          full.w2 = cfg.parametric->sample(rv, max_p);
        } else {
          full.w1 = simulate_path_delays(net, max_p, kProbeInterval, fw);
          full.w2 = simulate_path_delays(net, max_p, kProbeInterval, rv);
        }
      } catch (const std::exception& e) {
        for (auto& per_p : cell) {
          per_p[t].failed = true;
          per_p[t].failure = e.what();
        }
        return;
      }
      for (std::size_t pi = 0; pi < cfg.p_sweep.size(); ++pi) {
        const std::size_t p = cfg.p_sweep[pi];
        TrialRecord& rec = cell[pi][t];
        DelayTrace trace{{full.w1.begin(), full.w1.begin() + static_cast<std::ptrdiff_t>(p)},
                         {full.w2.begin(), full.w2.begin() + static_cast<std::ptrdiff_t>(p)}};
        const Schedule sched = Schedule::periodic(p, kRoundInterval, kT3Offset, cfg.t3_clock);
        try {
          // Every scheme sees the same timestamps.
          const TimestampSet ts = generate_exchange(cfg.truth, trace, sched);
          rec.delta_err.resize(ns);
          rec.phi_err.resize(ns);
          for (std::size_t k = 0; k < ns; ++k) {
            const Estimate e = run_scheme(cfg.schemes[k], ts, cfg.truth, *model, cfg);
            rec.delta_err[k] = e.delta_hat - cfg.truth.delta;
            rec.phi_err[k] = e.phi_hat - cfg.truth.phi;
          }
        } catch (const std::exception& e) {
          rec.failed = true;
          rec.failure = e.what();
          rec.delta_err.clear();
          rec.phi_err.clear();
        }
      }
    };

    const std::size_t nthreads = std::min(worker_threads(cfg.threads), cfg.trials);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t t = next++; t < cfg.trials; t = next++) one_trial(t);
    };
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    for (std::size_t pi = 0; pi < cfg.p_sweep.size(); ++pi) {
      std::size_t failed = 0;
      std::string first;
      for (const auto& r : cell[pi]) {
        if (r.failed) {
          if (failed++ == 0) first = r.failure;
        }
      }
      if (static_cast<double>(failed) > cfg.max_failure_rate * static_cast<double>(cfg.trials)) {
        throw Error(std::to_string(failed) + " of " + std::to_string(cfg.trials) +
                    " trials failed at P=" + std::to_string(cfg.p_sweep[pi]) + " (" +
                    cfg.source_label(src) + "): " + first);
      }
    }
  }
  return data;
}

RmseTable summarize(const ExperimentConfig& cfg, const ExperimentData& data) {
  RmseTable table;
  for (std::size_t src = 0; src < data.records.size(); ++src) {
    for (std::size_t pi = 0; pi < cfg.p_sweep.size(); ++pi) {
      for (std::size_t k = 0; k < cfg.schemes.size(); ++k) {
        std::vector<double> sd, sp;
        for (const auto& r : data.records[src][pi]) {
          if (r.failed) continue;
          sd.push_back(r.delta_err[k] * r.delta_err[k]);
          sp.push_back(r.phi_err[k] * r.phi_err[k]);
        }
        const Moments md = mean_se(sd), mp = mean_se(sp);
        RmseRow row;
        row.scheme = to_string(cfg.schemes[k]);
        row.p = cfg.p_sweep[pi];
        row.load = cfg.source_label(src);
        row.rmse_delta = std::sqrt(md.mean);
        row.rmse_phi = std::sqrt(mp.mean);
        // Delta method: se(sqrt(m)) = se(m) / (2 sqrt(m)).
        row.stderr_delta = row.rmse_delta > 0.0 ? md.se / (2.0 * row.rmse_delta) : 0.0;
        row.stderr_phi = row.rmse_phi > 0.0 ? mp.se / (2.0 * row.rmse_phi) : 0.0;
        row.trials = sd.size();
        table.push_back(row);
      }
    }
  }
  return table;
}

RmseTable run_experiment(const ExperimentConfig& cfg) { return summarize(cfg, run_trials(cfg)); }

std::string to_csv(const RmseTable& table) {
  std::ostringstream os;
  os << "scheme,P,load,rmse_delta_s,rmse_phi,stderr_delta,stderr_phi,trials\n";
  for (const auto& r : table) {
    os << r.scheme << ',' << r.p << ',' << r.load << ',' << format10(r.rmse_delta) << ','
       << format10(r.rmse_phi) << ',' << format10(r.stderr_delta) << ','
       << format10(r.stderr_phi) << ',' << r.trials << '\n';
  }
  return os.str();
}

RmseTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      detail::trim(line) != "scheme,P,load,rmse_delta_s,rmse_phi,stderr_delta,stderr_phi,trials") {
    throw ParseError("unexpected CSV header");
  }
  RmseTable table;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(detail::trim(cell));
    if (f.size() != 8) throw ParseError("CSV row needs 8 fields: '" + line + "'");
    RmseRow r;
    r.scheme = f[0];
    r.p = static_cast<std::size_t>(std::stoull(f[1]));
    r.load = f[2];
    r.rmse_delta = detail::parse_double(f[3]);
    r.rmse_phi = detail::parse_double(f[4]);
    r.stderr_delta = detail::parse_double(f[5]);
    r.stderr_phi = detail::parse_double(f[6]);
    r.trials = static_cast<std::size_t>(std::stoull(f[7]));
    table.push_back(r);
  }
  return table;
}

void emit_csv(const RmseTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << to_csv(table);
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace ptpmm
