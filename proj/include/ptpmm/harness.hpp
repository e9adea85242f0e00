#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ptpmm/delay_models.hpp"
#include "ptpmm/estimators.hpp"
#include "ptpmm/exchange.hpp"
#include "ptpmm/netsim.hpp"
#include "ptpmm/quadrature.hpp"

namespace ptpmm {

// How the estimators learn f_w. kExact hands them the generating model and is
// only available for parametric sources.
enum class FitOption { kExact, kKde, kHistogram };

std::string to_string(FitOption f);
FitOption parse_fit(const std::string& name);

struct ExperimentConfig {
  ClockParams truth{1.0, 2e-6, 2e-6, 2e-6};
  std::vector<std::size_t> p_sweep{4, 8, 16, 32, 64};
  std::size_t trials = 1000;

  // Network source: one sweep entry per load. Ignored when `parametric` is set.
  NetworkConfig network;
  std::vector<double> loads{0.4};
  // Parametric source; `model_id` labels it in the load column.
  std::optional<DelayModel> parametric;
  std::string model_id = "model";

  std::vector<Scheme> schemes{Scheme::kGmle, Scheme::kLmle, Scheme::kMinimaxK,
                              Scheme::kMinimaxS};
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  std::size_t training_size = 100000;
  std::optional<FitOption> fit;  // default: exact for parametric, kde for network
  std::size_t histogram_bins = 200;
  quad::QuadConfig quad_k = default_quad_config(Scheme::kMinimaxK);
  quad::QuadConfig quad_s = default_quad_config(Scheme::kMinimaxS);
  T3Clock t3_clock = T3Clock::kMaster;
  std::size_t threads = 0;  // 0: PTPMM_THREADS, else hardware concurrency
  double max_failure_rate = 0.01;

  void validate() const;
  FitOption effective_fit() const;
  std::size_t source_count() const { return parametric ? 1 : loads.size(); }
  std::string source_label(std::size_t i) const;
};

// Signed errors of one trial, one entry per scheme in config order.
struct TrialRecord {
  bool failed = false;
  std::string failure;
  std::vector<double> delta_err;  // delta_hat - delta, s
  std::vector<double> phi_err;    // phi_hat - phi
};

struct ExperimentData {
  // records[source][p index][trial]
  std::vector<std::vector<std::vector<TrialRecord>>> records;
  std::vector<DelayModel> fitted;  // per source
};

struct RmseRow {
  std::string scheme;
  std::size_t p = 0;
  std::string load;
  double rmse_delta = 0.0;  // s
  double rmse_phi = 0.0;
  double stderr_delta = 0.0;
  double stderr_phi = 0.0;
  std::size_t trials = 0;

  bool operator==(const RmseRow&) const = default;
};

using RmseTable = std::vector<RmseRow>;

// Runs every trial; throws when more than max_failure_rate of the trials of
// any (source, P) cell failed.
ExperimentData run_trials(const ExperimentConfig& cfg);
RmseTable summarize(const ExperimentConfig& cfg, const ExperimentData& data);
RmseTable run_experiment(const ExperimentConfig& cfg);

// Fits the delay model from a training trace; refuses samples not drawn from
// the training stream.
struct TaggedSamples {
  Stream stream;
  std::vector<double> values;
};
DelayModel fit_training_model(const TaggedSamples& samples, FitOption fit, std::size_t bins);

std::string to_csv(const RmseTable& table);
RmseTable parse_csv(const std::string& text);
void emit_csv(const RmseTable& table, const std::string& path);

std::size_t worker_threads(std::size_t requested);

int cli_main(int argc, const char* const* argv);

}  // namespace ptpmm
