#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ptpmm/delay_models.hpp"
#include "ptpmm/errors.hpp"
#include "ptpmm/estimators.hpp"
#include "ptpmm/exchange.hpp"
#include "ptpmm/harness.hpp"
#include "ptpmm/netsim.hpp"
#include "ptpmm/quadrature.hpp"
#include "ptpmm/rng.hpp"

namespace py = pybind11;
using namespace ptpmm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) { return Array(v.size(), v.data()); }

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

// Exposes a std::vector<double> member as a numpy array property.
template <class T>
void array_property(py::class_<T>& cls, const char* name, std::vector<double> T::*member) {
  cls.def_property(
      name, [member](const T& self) { return to_array(self.*member); },
      [member](T& self, const Array& a) { self.*member = to_vector(a); });
}

// Applies f elementwise, keeping the input's shape; scalars give scalars.
template <class F>
py::object elementwise(const py::object& x, F f) {
  if (py::isinstance<py::float_>(x) || py::isinstance<py::int_>(x))
    return py::float_(f(x.cast<double>()));
  Array a = x.cast<Array>();
  Array out(std::vector<py::ssize_t>(a.shape(), a.shape() + a.ndim()));
  const double* in = a.data();
  double* o = out.mutable_data();
  for (py::ssize_t i = 0; i < a.size(); ++i) o[i] = f(in[i]);
  return std::move(out);
}

}  // namespace

PYBIND11_MODULE(_ptpmm, m) {
  m.doc() = "Clock skew and offset estimation for two-way time transfer";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error);
  py::register_exception<DegenerateFit>(m, "DegenerateFit", error);
  py::register_exception<UnstableLoad>(m, "UnstableLoad", error);
  py::register_exception<EmptyPosterior>(m, "EmptyPosterior", error);
  py::register_exception<DegenerateDesign>(m, "DegenerateDesign", error);
  py::register_exception<InfeasibleStart>(m, "InfeasibleStart", error);
  py::register_exception<ParseError>(m, "ParseError", error);

  m.attr("ROUND_INTERVAL") = kRoundInterval;
  m.attr("T3_OFFSET") = kT3Offset;
  m.attr("PROBE_INTERVAL") = kProbeInterval;

  // Delay models.
  py::class_<SupportInterval>(m, "SupportInterval")
      .def(py::init<double, double>(), py::arg("lo") = 0.0, py::arg("hi") = kInf)
      .def_readwrite("lo", &SupportInterval::lo)
      .def_readwrite("hi", &SupportInterval::hi)
      .def("contains", &SupportInterval::contains)
      .def("empty", &SupportInterval::empty)
      .def("__repr__", [](const SupportInterval& s) {
        std::ostringstream os;
        os << "SupportInterval(" << s.lo << ", " << s.hi << ")";
        return os.str();
      });

  py::enum_<DelayKind>(m, "DelayKind")
      .value("EXPONENTIAL", DelayKind::kExponential)
      .value("GAMMA", DelayKind::kGamma)
      .value("GAUSSIAN", DelayKind::kGaussian)
      .value("KDE", DelayKind::kKde)
      .value("HISTOGRAM", DelayKind::kHistogram);

  py::enum_<FitMethod>(m, "FitMethod")
      .value("KDE", FitMethod::kKde)
      .value("HISTOGRAM", FitMethod::kHistogram);

  py::class_<DelayModel>(m, "DelayModel")
      .def_static("exponential", &DelayModel::exponential, py::arg("rate"))
      .def_static("gamma", &DelayModel::gamma, py::arg("shape"), py::arg("scale"))
      .def_static("gaussian", &DelayModel::gaussian, py::arg("mean"), py::arg("stddev"))
      .def_static(
          "kde",
          [](const Array& points, double bw) { return DelayModel::kde(to_vector(points), bw); },
          py::arg("points"), py::arg("bandwidth"))
      .def_static(
          "histogram",
          [](const Array& edges, const Array& masses) {
            return DelayModel::histogram(to_vector(edges), to_vector(masses));
          },
          py::arg("edges"), py::arg("masses"))
      .def_static(
          "from_text",
          [](const std::string& text) {
            std::istringstream in(text);
            return read_delay_model(in);
          },
          py::arg("text"))
      .def("to_text",
           [](const DelayModel& d) {
             std::ostringstream out;
             write_delay_model(out, d);
             return out.str();
           })
      .def_property_readonly("kind", &DelayModel::kind)
      .def_property_readonly("mean", &DelayModel::mean)
      .def_property_readonly("stddev", &DelayModel::stddev)
      .def_property_readonly("median", &DelayModel::median)
      .def_property_readonly("support", &DelayModel::support)
      .def(
          "log_density",
          [](const DelayModel& d, const py::object& x) {
            return elementwise(x, [&](double v) { return d.log_density(v); });
          },
          py::arg("w"))
      .def(
          "cdf",
          [](const DelayModel& d, const py::object& x) {
            return elementwise(x, [&](double v) { return d.cdf(v); });
          },
          py::arg("w"))
      .def(
          "quantile",
          [](const DelayModel& d, const py::object& x) {
            return elementwise(x, [&](double v) { return d.quantile(v); });
          },
          py::arg("p"))
      .def(
          "sample",
          [](const DelayModel& d, std::size_t n, std::uint64_t seed) {
            Rng rng(seed);
            return to_array(d.sample(rng, n));
          },
          py::arg("n"), py::arg("seed"))
      .def("__repr__", [](const DelayModel& d) {
        return "DelayModel(" + to_string(d.kind()) + ")";
      });

  m.def("silverman_bandwidth", [](const Array& s) { return silverman_bandwidth(to_vector(s)); },
        py::arg("samples"));
  m.def(
      "fit_empirical",
      [](const Array& s, FitMethod method, std::size_t resolution) {
        return fit_empirical(to_vector(s), method, resolution);
      },
      py::arg("samples"), py::arg("method"), py::arg("resolution") = 200);

  // Exchange.
  py::class_<ClockParams>(m, "ClockParams")
      .def(py::init([](double phi, double delta, double d_ms, double d_sm) {
             return ClockParams{phi, delta, d_ms, d_sm};
           }),
           py::arg("phi") = 1.0, py::arg("delta") = 0.0, py::arg("d_ms") = 0.0,
           py::arg("d_sm") = 0.0)
      .def_readwrite("phi", &ClockParams::phi)
      .def_readwrite("delta", &ClockParams::delta)
      .def_readwrite("d_ms", &ClockParams::d_ms)
      .def_readwrite("d_sm", &ClockParams::d_sm);

  py::class_<DelayTrace> trace(m, "DelayTrace");
  trace.def(py::init([](const Array& w1, const Array& w2) {
              return DelayTrace{to_vector(w1), to_vector(w2)};
            }),
            py::arg("w1"), py::arg("w2"));
  array_property(trace, "w1", &DelayTrace::w1);
  array_property(trace, "w2", &DelayTrace::w2);

  py::class_<TimestampSet> tset(m, "TimestampSet");
  tset.def(py::init([](const Array& t1, const Array& t2, const Array& t3, const Array& t4) {
             TimestampSet ts{to_vector(t1), to_vector(t2), to_vector(t3), to_vector(t4)};
             ts.validate();
             return ts;
           }),
           py::arg("t1"), py::arg("t2"), py::arg("t3"), py::arg("t4"))
      .def("__len__", &TimestampSet::size)
      .def("validate", &TimestampSet::validate)
      .def("to_text",
           [](const TimestampSet& ts) {
             std::ostringstream out;
             write_exchange(out, ts);
             return out.str();
           })
      .def_static(
          "from_text",
          [](const std::string& text) {
            std::istringstream in(text);
            return read_exchange(in).ts;
          },
          py::arg("text"));
  array_property(tset, "t1", &TimestampSet::t1);
  array_property(tset, "t2", &TimestampSet::t2);
  array_property(tset, "t3", &TimestampSet::t3);
  array_property(tset, "t4", &TimestampSet::t4);

  py::enum_<T3Clock>(m, "T3Clock")
      .value("SLAVE", T3Clock::kSlave)
      .value("MASTER", T3Clock::kMaster);

  py::class_<Schedule> sched(m, "Schedule");
  sched.def(py::init([](const Array& t1, double offset, T3Clock clock) {
              return Schedule{to_vector(t1), offset, clock};
            }),
            py::arg("t1"), py::arg("t3_offset") = kT3Offset, py::arg("t3_clock") = T3Clock::kSlave)
      .def_static("periodic", &Schedule::periodic, py::arg("rounds"),
                  py::arg("interval") = kRoundInterval, py::arg("t3_offset") = kT3Offset,
                  py::arg("clock") = T3Clock::kSlave)
      .def_readwrite("t3_offset", &Schedule::t3_offset)
      .def_readwrite("t3_clock", &Schedule::t3_clock);
  array_property(sched, "t1", &Schedule::t1);

  m.def("generate_exchange", &generate_exchange, py::arg("params"), py::arg("trace"),
        py::arg("schedule"));
  m.def("implied_delays", &implied_delays, py::arg("ts"), py::arg("phi"), py::arg("delta"),
        py::arg("d_ms"), py::arg("d_sm"));
  m.def("log_likelihood_k", &log_likelihood_k, py::arg("ts"), py::arg("phi"), py::arg("delta"),
        py::arg("d_ms"), py::arg("d_sm"), py::arg("fwd"), py::arg("rev"));
  m.def("log_likelihood_s", &log_likelihood_s, py::arg("ts"), py::arg("phi"), py::arg("d"),
        py::arg("delta"), py::arg("fwd"), py::arg("rev"));
  m.def("feasible_delta", &feasible_delta, py::arg("ts"), py::arg("phi"), py::arg("d_ms"),
        py::arg("d_sm"), py::arg("fwd"), py::arg("rev"));
  m.def("transform_k", &transform_k, py::arg("ts"), py::arg("a"), py::arg("b"));
  m.def("transform_s", &transform_s, py::arg("ts"), py::arg("a"), py::arg("b"), py::arg("c"));

  // Estimators.
  py::class_<quad::QuadConfig>(m, "QuadConfig")
      .def(py::init<>())
      .def_readwrite("grid_points", &quad::QuadConfig::grid_points)
      .def_readwrite("refinement_passes", &quad::QuadConfig::refinement_passes)
      .def_readwrite("mass_tol", &quad::QuadConfig::mass_tol)
      .def_readwrite("rel_tol", &quad::QuadConfig::rel_tol)
      .def_readwrite("max_panels", &quad::QuadConfig::max_panels)
      .def("validate", &quad::QuadConfig::validate);

  py::enum_<Scheme>(m, "Scheme")
      .value("GMLE", Scheme::kGmle)
      .value("LMLE", Scheme::kLmle)
      .value("MINIMAX_K", Scheme::kMinimaxK)
      .value("MINIMAX_S", Scheme::kMinimaxS);
  m.def("parse_scheme", &parse_scheme, py::arg("name"));
  m.def("default_quad_config", &default_quad_config, py::arg("scheme"));

  py::enum_<MinimaxSRoute>(m, "MinimaxSRoute")
      .value("SEPARABLE", MinimaxSRoute::kSeparable)
      .value("DIRECT", MinimaxSRoute::kDirect);

  py::class_<Diagnostics>(m, "Diagnostics")
      .def_readonly("converged", &Diagnostics::converged)
      .def_readonly("evaluations", &Diagnostics::evaluations)
      .def_readonly("quad_rel_error", &Diagnostics::quad_rel_error)
      .def_readonly("quad_warning", &Diagnostics::quad_warning)
      .def_readonly("log_likelihood", &Diagnostics::log_likelihood);

  py::class_<Estimate>(m, "Estimate")
      .def_readonly("phi_hat", &Estimate::phi_hat)
      .def_readonly("delta_hat", &Estimate::delta_hat)
      .def_readonly("scheme", &Estimate::scheme)
      .def_readonly("diagnostics", &Estimate::diagnostics)
      .def("__repr__", [](const Estimate& e) {
        std::ostringstream os;
        os.precision(12);
        os << "Estimate(" << to_string(e.scheme) << ", phi_hat=" << e.phi_hat
           << ", delta_hat=" << e.delta_hat << ")";
        return os.str();
      });

  py::class_<LmleConfig>(m, "LmleConfig")
      .def(py::init<>())
      .def_readwrite("step_s", &LmleConfig::step_s)
      .def_readwrite("step_delta_scale", &LmleConfig::step_delta_scale)
      .def_readwrite("contraction", &LmleConfig::contraction)
      .def_readwrite("rel_stop", &LmleConfig::rel_stop)
      .def_readwrite("max_evaluations", &LmleConfig::max_evaluations);

  m.def("gmle", &gmle, py::arg("ts"), py::arg("d_ms"), py::arg("d_sm"), py::arg("mean_delay"));
  m.def("lmle", &lmle, py::arg("ts"), py::arg("d_ms"), py::arg("d_sm"), py::arg("fwd"),
        py::arg("rev"), py::arg("cfg") = LmleConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "minimax_k",
      [](const TimestampSet& ts, double d_ms, double d_sm, const DelayModel& fwd,
         const DelayModel& rev, std::optional<quad::QuadConfig> cfg) {
        py::gil_scoped_release release;
        return minimax_k(ts, d_ms, d_sm, fwd, rev,
                         cfg.value_or(default_quad_config(Scheme::kMinimaxK)));
      },
      py::arg("ts"), py::arg("d_ms"), py::arg("d_sm"), py::arg("fwd"), py::arg("rev"),
      py::arg("cfg") = py::none());
  m.def(
      "minimax_s",
      [](const TimestampSet& ts, const DelayModel& fwd, const DelayModel& rev,
         std::optional<quad::QuadConfig> cfg, MinimaxSRoute route) {
        py::gil_scoped_release release;
        return minimax_s(ts, fwd, rev, cfg.value_or(default_quad_config(Scheme::kMinimaxS)),
                         route);
      },
      py::arg("ts"), py::arg("fwd"), py::arg("rev"), py::arg("cfg") = py::none(),
      py::arg("route") = MinimaxSRoute::kSeparable);

  // Network simulator.
  py::enum_<TrafficKind>(m, "TrafficKind")
      .value("TM1", TrafficKind::kTm1)
      .value("TM2", TrafficKind::kTm2)
      .value("EG_TM1", TrafficKind::kEgTm1);

  py::class_<TrafficModel> traffic(m, "TrafficModel");
  traffic.def_static("tm1", &TrafficModel::tm1)
      .def_static("tm2", &TrafficModel::tm2)
      .def_static("eg_tm1", &TrafficModel::eg_tm1)
      .def_static("parse", &parse_traffic, py::arg("name"))
      .def_readonly("kind", &TrafficModel::kind)
      .def_readwrite("fs_period_s", &TrafficModel::fs_period_s)
      .def_readwrite("fs_packet_bytes", &TrafficModel::fs_packet_bytes)
      .def_readwrite("fs_max_batch", &TrafficModel::fs_max_batch)
      .def_readwrite("ed_extra_load", &TrafficModel::ed_extra_load)
      .def_property_readonly("mean_size_bytes", &TrafficModel::mean_size_bytes);
  array_property(traffic, "sizes_bytes", &TrafficModel::sizes_bytes);
  array_property(traffic, "shares", &TrafficModel::shares);

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init<>())
      .def_readwrite("line_rate_bps", &NetworkConfig::line_rate_bps)
      .def_readwrite("switches", &NetworkConfig::switches)
      .def_readwrite("load", &NetworkConfig::load)
      .def_readwrite("traffic", &NetworkConfig::traffic)
      .def_readwrite("sync_packet_bytes", &NetworkConfig::sync_packet_bytes)
      .def_readwrite("warmup_s", &NetworkConfig::warmup_s)
      .def_readwrite("seed", &NetworkConfig::seed)
      .def_readwrite("max_queue", &NetworkConfig::max_queue)
      .def("validate", &NetworkConfig::validate);

  m.def(
      "simulate_path_delays",
      [](const NetworkConfig& cfg, std::size_t n, double interval, std::uint64_t seed) {
        std::vector<double> d;
        {
          py::gil_scoped_release release;
          Rng rng(seed);
          d = simulate_path_delays(cfg, n, interval, rng);
        }
        return to_array(d);
      },
      py::arg("cfg"), py::arg("n"), py::arg("probe_interval") = kProbeInterval, py::arg("seed"));
  m.def(
      "collect_training_trace",
      [](const NetworkConfig& cfg, std::size_t n, std::uint64_t seed) {
        std::vector<double> d;
        {
          py::gil_scoped_release release;
          Rng rng(derive_seed(seed, Stream::kTraining));
          d = collect_training_trace(cfg, n, rng);
        }
        return to_array(d);
      },
      py::arg("cfg"), py::arg("n"), py::arg("seed"));

  // Harness.
  py::enum_<FitOption>(m, "FitOption")
      .value("EXACT", FitOption::kExact)
      .value("KDE", FitOption::kKde)
      .value("HISTOGRAM", FitOption::kHistogram);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("truth", &ExperimentConfig::truth)
      .def_readwrite("p_sweep", &ExperimentConfig::p_sweep)
      .def_readwrite("trials", &ExperimentConfig::trials)
      .def_readwrite("network", &ExperimentConfig::network)
      .def_readwrite("loads", &ExperimentConfig::loads)
      .def_readwrite("parametric", &ExperimentConfig::parametric)
      .def_readwrite("model_id", &ExperimentConfig::model_id)
      .def_readwrite("schemes", &ExperimentConfig::schemes)
      .def_readwrite("train_seed", &ExperimentConfig::train_seed)
      .def_readwrite("test_seed", &ExperimentConfig::test_seed)
      .def_readwrite("training_size", &ExperimentConfig::training_size)
      .def_readwrite("fit", &ExperimentConfig::fit)
      .def_readwrite("histogram_bins", &ExperimentConfig::histogram_bins)
      .def_readwrite("quad_k", &ExperimentConfig::quad_k)
      .def_readwrite("quad_s", &ExperimentConfig::quad_s)
      .def_readwrite("t3_clock", &ExperimentConfig::t3_clock)
      .def_readwrite("threads", &ExperimentConfig::threads)
      .def_readwrite("max_failure_rate", &ExperimentConfig::max_failure_rate)
      .def("validate", &ExperimentConfig::validate);

  py::class_<RmseRow>(m, "RmseRow")
      .def_readonly("scheme", &RmseRow::scheme)
      .def_readonly("p", &RmseRow::p)
      .def_readonly("load", &RmseRow::load)
      .def_readonly("rmse_delta", &RmseRow::rmse_delta)
      .def_readonly("rmse_phi", &RmseRow::rmse_phi)
      .def_readonly("stderr_delta", &RmseRow::stderr_delta)
      .def_readonly("stderr_phi", &RmseRow::stderr_phi)
      .def_readonly("trials", &RmseRow::trials)
      .def("__eq__", [](const RmseRow& a, const RmseRow& b) { return a == b; });

  m.def("run_experiment", &run_experiment, py::arg("cfg"),
        py::call_guard<py::gil_scoped_release>());
  m.def("to_csv", &to_csv, py::arg("table"));
  m.def("parse_csv", &parse_csv, py::arg("text"));
  m.def(
      "fit_training_model",
      [](const Array& samples, FitOption fit, std::size_t bins) {
        return fit_training_model({Stream::kTraining, to_vector(samples)}, fit, bins);
      },
      py::arg("samples"), py::arg("fit"), py::arg("bins") = 200);
}
