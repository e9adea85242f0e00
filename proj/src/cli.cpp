#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ptpmm/errors.hpp"
#include "ptpmm/harness.hpp"
#include "text_util.hpp"

namespace ptpmm {

namespace {

constexpr double kUs = 1e-6;

// Reads "key=value" lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line without '=': '" + t + "'");
    out[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
  }
  return out;
}

std::string flag_for(const std::string& key) { return key.size() == 1 ? "-" + key : "--" + key; }

// Appends config-file settings for every flag the command line leaves unset.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::set<std::string> given;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw InvalidArgument("--config needs a path");
      path = args[++i];
      continue;
    }
    if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
      continue;
    }
    if (a.size() > 1 && a[0] == '-') given.insert(a.substr(0, a.find('=')));
    kept.push_back(a);
  }
  if (path.empty()) return kept;
  for (const auto& [key, value] : read_config(path)) {
    const std::string flag = flag_for(key);
    if (given.count(flag)) continue;
    kept.push_back(flag);
    kept.push_back(value);
  }
  return kept;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw Error("cannot open '" + path + "' for writing");
  return file;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

// A delay model is either a file written by fit-model or a spec:
// exponential:<mean us>, gamma:<shape>,<scale us>, gaussian:<mean us>,<sd us>.
DelayModel load_model(const std::string& spec) {
  if (std::filesystem::exists(spec)) {
    auto in = open_in(spec);
    return read_delay_model(in);
  }
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw InvalidArgument("no such model file '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  std::vector<double> v;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(detail::parse_double(detail::trim(item)));
  if (kind == "exponential" && v.size() == 1) return DelayModel::exponential(1.0 / (v[0] * kUs));
  if (kind == "gamma" && v.size() == 2) return DelayModel::gamma(v[0], v[1] * kUs);
  if (kind == "gaussian" && v.size() == 2) return DelayModel::gaussian(v[0] * kUs, v[1] * kUs);
  throw InvalidArgument("bad model spec '" + spec + "'");
}

struct NetFlags {
  std::string traffic = "tm1";
  double load = 0.4;
  int switches = 10;
  double rate_bps = 1e9;
  double ed_load = 0.0;

  void add(CLI::App* app, bool with_load) {
    app->add_option("--traffic", traffic, "tm1, tm2 or eg-tm1")->capture_default_str();
    if (with_load) app->add_option("--load", load, "background load factor")->capture_default_str();
    app->add_option("--switches", switches, "switches on the path")->capture_default_str();
    app->add_option("--rate-bps", rate_bps, "line rate")->capture_default_str();
    app->add_option("--ed-load", ed_load, "extra event-driven load (eg-tm1)")->capture_default_str();
  }

  NetworkConfig make(std::uint64_t seed) const {
    NetworkConfig cfg;
    cfg.traffic = parse_traffic(traffic);
    cfg.traffic.ed_extra_load = ed_load;
    cfg.load = load;
    cfg.switches = switches;
    cfg.line_rate_bps = rate_bps;
    cfg.seed = seed;
    return cfg;
  }
};

struct QuadFlags {
  std::optional<std::size_t> grid;
  std::optional<std::size_t> refine;
  std::optional<double> tol;

  void add(CLI::App* app) {
    app->add_option("--grid", grid, "posterior scan nodes per axis");
    app->add_option("--refine", refine, "refinement passes");
    app->add_option("--quad-tol", tol, "quadrature relative tolerance");
  }

  quad::QuadConfig apply(quad::QuadConfig q) const {
    if (grid) q.grid_points = *grid;
    if (refine) q.refinement_passes = *refine;
    if (tol) q.rel_tol = *tol;
    q.validate();
    return q;
  }
};

T3Clock parse_clock(const std::string& s) {
  if (s == "slave") return T3Clock::kSlave;
  if (s == "master") return T3Clock::kMaster;
  throw InvalidArgument("t3 clock must be slave or master");
}

std::string fmt12(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Clock skew and offset estimation for two-way time transfer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::uint64_t seed = 1;
  std::string out_path;
  NetFlags net;
  QuadFlags qf;

  auto* sim = app.add_subcommand("simulate-delays", "queuing delays through a switch cascade");
  std::size_t n = 10000;
  net.add(sim, true);
  sim->add_option("--seed", seed)->capture_default_str();
  sim->add_option("-n", n, "probes")->capture_default_str();
  sim->add_option("--out", out_path, "trace file (default stdout)");

  auto* fitc = app.add_subcommand("fit-model", "fit or write a delay model");
  std::string trace_path, fit_name = "kde", model_spec;
  std::size_t bins = 200;
  fitc->add_option("--in", trace_path, "delay trace to fit");
  fitc->add_option("--fit", fit_name, "kde or histogram")->capture_default_str();
  fitc->add_option("--bins", bins, "histogram bins")->capture_default_str();
  fitc->add_option("--model", model_spec, "write a parametric model instead of fitting");
  fitc->add_option("--out", out_path, "model file (default stdout)");

  auto* gen = app.add_subcommand("generate-exchange", "simulate one timestamp exchange");
  std::size_t rounds = 8;
  double phi = 1.0, delta_us = 2.0, d_ms_us = 2.0, d_sm_us = 2.0;
  std::string clock_name = "slave";
  gen->add_option("-p,--p", rounds, "message exchanges")->capture_default_str();
  gen->add_option("--phi", phi)->capture_default_str();
  gen->add_option("--delta", delta_us, "offset, us")->capture_default_str();
  gen->add_option("--d-ms", d_ms_us, "fixed delay master to slave, us")->capture_default_str();
  gen->add_option("--d-sm", d_sm_us, "fixed delay slave to master, us")->capture_default_str();
  gen->add_option("--model", model_spec, "delay model file or spec; network when absent");
  gen->add_option("--t3-clock", clock_name, "slave or master")->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  net.add(gen, true);
  gen->add_option("--out", out_path, "exchange file (default stdout)");

  auto* est = app.add_subcommand("estimate", "estimate skew and offset from an exchange file");
  std::string exchange_path, scheme_name = "minimax-k", route_name = "separable";
  est->add_option("--in", exchange_path, "exchange file")->required();
  est->add_option("--model", model_spec, "delay model file or spec (gmle alone may omit it)");
  est->add_option("--scheme", scheme_name, "gmle, lmle, minimax-k or minimax-s")
      ->capture_default_str();
  est->add_option("--d-ms", d_ms_us, "known fixed delay, us")->capture_default_str();
  est->add_option("--d-sm", d_sm_us, "known fixed delay, us")->capture_default_str();
  est->add_option("--route", route_name, "minimax-s route: separable or direct")
      ->capture_default_str();
  qf.add(est);

  auto* run = app.add_subcommand("run-experiment", "Monte-Carlo RMSE sweep, CSV out");
  ExperimentConfig ec;
  std::vector<double> loads{0.4};
  std::vector<std::string> scheme_names{"gmle", "lmle", "minimax-k", "minimax-s"};
  std::optional<std::string> fit_opt;
  std::string run_clock = "master";
  double true_phi = ec.truth.phi, true_delta = 2.0, true_d = 2.0;
  std::size_t threads = 0;
  net.add(run, false);
  run->add_option("--load", loads, "load factors")->delimiter(',')->capture_default_str();
  run->add_option("-p,--p", ec.p_sweep, "P sweep")->delimiter(',')->capture_default_str();
  run->add_option("--trials", ec.trials)->capture_default_str();
  run->add_option("--scheme", scheme_names, "schemes")->delimiter(',')->capture_default_str();
  run->add_option("--fit", fit_opt, "exact, kde or histogram");
  run->add_option("--model", model_spec, "parametric delay model instead of the network");
  run->add_option("--bins", ec.histogram_bins, "histogram bins")->capture_default_str();
  run->add_option("--training-size", ec.training_size)->capture_default_str();
  run->add_option("--phi", true_phi)->capture_default_str();
  run->add_option("--delta", true_delta, "true offset, us")->capture_default_str();
  run->add_option("--d", true_d, "true fixed delay, us")->capture_default_str();
  run->add_option("--t3-clock", run_clock, "slave or master")->capture_default_str();
  run->add_option("--threads", threads, "worker threads (0: PTPMM_THREADS or all cores)");
  run->add_option("--seed", seed)->capture_default_str();
  run->add_option("--out", out_path, "CSV file (default stdout)");
  qf.add(run);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
    // CLI11 consumes the vector from the back.
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    std::ofstream file;
    if (*sim) {
      const NetworkConfig cfg = net.make(seed);
      Rng rng(derive_seed(seed, Stream::kTest));
      const auto delays = simulate_path_delays(cfg, n, kProbeInterval, rng);
      write_trace(open_out(out_path, file), cfg, delays);
    } else if (*fitc) {
      DelayModel model = DelayModel::exponential(1.0);
      if (!model_spec.empty()) {
        model = load_model(model_spec);
      } else {
        if (trace_path.empty()) throw InvalidArgument("fit-model needs --in or --model");
        auto in = open_in(trace_path);
        const TaggedSamples samples{Stream::kTraining, read_trace(in)};
        const FitOption f = parse_fit(fit_name);
        if (f == FitOption::kExact) throw InvalidArgument("--fit must be kde or histogram");
        model = fit_training_model(samples, f, bins);
      }
      write_delay_model(open_out(out_path, file), model);
    } else if (*gen) {
      const ClockParams truth{phi, delta_us * kUs, d_ms_us * kUs, d_sm_us * kUs};
      DelayTrace trace;
      Rng fw(derive_seed(seed, Stream::kForward));
      Rng rv(derive_seed(seed, Stream::kReverse));
      if (!model_spec.empty()) {
        const DelayModel m = load_model(model_spec);
        trace.w1 = m.sample(fw, rounds);
        trace.w2 = m.sample(rv, rounds);
      } else {
        const NetworkConfig cfg = net.make(seed);
        trace.w1 = simulate_path_delays(cfg, rounds, kProbeInterval, fw);
        trace.w2 = simulate_path_delays(cfg, rounds, kProbeInterval, rv);
      }
      const Schedule sched =
          Schedule::periodic(rounds, kRoundInterval, kT3Offset, parse_clock(clock_name));
      write_exchange(open_out(out_path, file), generate_exchange(truth, trace, sched), truth);
    } else if (*est) {
      auto in = open_in(exchange_path);
      const ExchangeFile ex = read_exchange(in);
      const Scheme s = parse_scheme(scheme_name);
      const double d_ms = d_ms_us * kUs, d_sm = d_sm_us * kUs;
      std::optional<DelayModel> model;
      if (!model_spec.empty()) model = load_model(model_spec);
      if (!model && s != Scheme::kGmle) throw InvalidArgument("--model is required for this scheme");
      Estimate e;
      switch (s) {
        case Scheme::kGmle: e = gmle(ex.ts, d_ms, d_sm, model ? model->mean() : 0.0); break;
        case Scheme::kLmle: e = lmle(ex.ts, d_ms, d_sm, *model, *model); break;
        case Scheme::kMinimaxK:
          e = minimax_k(ex.ts, d_ms, d_sm, *model, *model, qf.apply(default_quad_config(s)));
          break;
        case Scheme::kMinimaxS: {
          MinimaxSRoute route;
          if (route_name == "separable") route = MinimaxSRoute::kSeparable;
          else if (route_name == "direct") route = MinimaxSRoute::kDirect;
          else throw InvalidArgument("route must be separable or direct");
          e = minimax_s(ex.ts, *model, *model, qf.apply(default_quad_config(s)), route);
          break;
        }
      }
      std::cout << "phi=" << fmt12(e.phi_hat) << " delta=" << fmt12(e.delta_hat / kUs) << '\n';
      std::cout << "scheme=" << to_string(e.scheme) << '\n';
      std::cout << "converged=" << (e.diagnostics.converged ? "true" : "false") << '\n';
      std::cout << "evaluations=" << e.diagnostics.evaluations << '\n';
      if (s == Scheme::kMinimaxK || s == Scheme::kMinimaxS) {
        std::cout << "quad_rel_error=" << fmt12(e.diagnostics.quad_rel_error) << '\n';
        std::cout << "quad_warning=" << (e.diagnostics.quad_warning ? "true" : "false") << '\n';
      }
      if (s == Scheme::kLmle) std::cout << "log_likelihood=" << fmt12(e.diagnostics.log_likelihood) << '\n';
    } else if (*run) {
      ec.truth = ClockParams{true_phi, true_delta * kUs, true_d * kUs, true_d * kUs};
      ec.network = net.make(seed);
      ec.loads = loads;
      ec.schemes.clear();
      for (const auto& name : scheme_names) ec.schemes.push_back(parse_scheme(name));
      if (fit_opt) ec.fit = parse_fit(*fit_opt);
      if (!model_spec.empty()) {
        ec.parametric = load_model(model_spec);
        ec.model_id = std::filesystem::path(model_spec).filename().string();
      }
      ec.train_seed = derive_seed(seed, Stream::kTraining);
      ec.test_seed = derive_seed(seed, Stream::kTest);
      ec.quad_k = qf.apply(ec.quad_k);
      ec.quad_s = qf.apply(ec.quad_s);
      ec.t3_clock = parse_clock(run_clock);
      ec.threads = threads;
      open_out(out_path, file) << to_csv(run_experiment(ec));
    }
    if (file.is_open() && !file.flush()) throw Error("failed writing '" + out_path + "'");
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ptpmm
