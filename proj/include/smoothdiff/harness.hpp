#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smoothdiff/optimizers.hpp"
#include "smoothdiff/tasks.hpp"
#include "smoothdiff/trace.hpp"

namespace smoothdiff {

enum class Method { FD, FR22, OurG, OurH, OurHVP, OurHVPA };

std::string to_string(Method method);
Method parse_method(const std::string& name);
bool is_second_order(Method method);

struct RunConfig {
  std::string name = "run";
  std::string task = "quad";
  Method method = Method::OurG;
  std::size_t samples = 1;
  double sigma_start = 0.5;
  double sigma_end = 0.05;
  std::uint64_t sigma_iters = 100;
  /// First-order methods only.
  std::optional<double> lr;
  /// Second-order methods only.
  std::optional<double> trust_region;
  std::optional<std::uint64_t> ls_iters;
  std::optional<double> ls_tol;
  std::optional<std::uint64_t> recompute;
  /// Per-method default when unset: aggregate for OurHVPA, per-element otherwise.
  std::optional<SamplingMode> sampling;
  bool control_variate = true;
  /// HVP shift as a fraction of the current sigma.
  double hvp_epsilon_rel = 1e-2;
  double fd_step = 1e-6;
  std::uint64_t seed = 0;
  Budget budget;
  std::size_t ensemble = 20;
  std::size_t threads = 1;
  /// Virtual clock: wall time is evals * seconds_per_eval.
  bool deterministic = false;
  double seconds_per_eval = 1e-4;

  void validate() const;
  SamplingMode sampling_mode() const;
};

struct ThresholdStat {
  double fraction = 0.0;
  std::size_t reached = 0;
  std::size_t runs = 0;
  /// Medians over the runs that reached the threshold; empty unless at least
  /// half the ensemble did.
  std::optional<double> median_time;
  std::optional<double> median_evals;
};

struct EnsembleResult {
  RunConfig config;
  double loss_floor = 0.0;
  std::vector<ConvergenceTrace> traces;
  std::vector<ThresholdStat> loss_thresholds;
  std::vector<ThresholdStat> param_thresholds;
};

inline const std::vector<double> kDefaultThresholds{0.9, 0.99, 0.999};

/// Index of the first record whose error fell by at least `fraction` of the
/// first record's error, or nullopt.
std::optional<std::size_t> first_crossing(const ConvergenceTrace& trace, double fraction, bool use_loss,
                                          double loss_floor);

std::vector<ThresholdStat> compute_thresholds(const std::vector<ConvergenceTrace>& traces, bool use_loss,
                                              double loss_floor,
                                              const std::vector<double>& fractions = kDefaultThresholds);

/// One optimization run; run index k uses seed + k.
ConvergenceTrace run_single(const RunConfig& cfg, const Task& task, std::size_t run_index);

EnsembleResult run_ensemble(const RunConfig& cfg);

struct VarianceRow {
  std::string order;  // G, H or HVP
  SamplingMode mode;
  std::uint64_t budget_evals;
  std::size_t samples;
  /// Variance of each estimated entry over the repetitions.
  std::vector<double> element_variance;
  /// Mean of each estimated entry over the repetitions.
  std::vector<double> element_mean;
  double mean_variance = 0.0;
};

struct VarianceOptions {
  std::vector<std::string> orders{"G", "H", "HVP"};
  std::vector<SamplingMode> modes{SamplingMode::PerElementIS, SamplingMode::AggregateIS, SamplingMode::Uniform};
  std::vector<std::uint64_t> budgets{64, 256, 1024, 4096};
  std::size_t repetitions = 100;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  bool control_variate = true;
  /// HVP direction; empty selects the first coordinate axis.
  Vector direction;
};

/// Per-element estimator variance at equal objective-evaluation budgets.
std::vector<VarianceRow> variance_report(const Task& task, const Vector& theta, const VarianceOptions& options);

/// Least-squares slope of log(mean_variance) against log(budget) for the
/// rows matching (order, mode).
double variance_slope(const std::vector<VarianceRow>& rows, const std::string& order, SamplingMode mode);

// Trace files.
inline constexpr const char* kCsvHeader = "run,wall_time_s,iter,evals,loss,param_error";

void export_traces(const EnsembleResult& result, const std::string& path, const std::string& format);
std::string traces_to_csv(const std::vector<ConvergenceTrace>& traces);
std::string result_to_json(const EnsembleResult& result);

struct ImportedTraces {
  std::vector<ConvergenceTrace> traces;
  /// Present for JSON files.
  std::optional<double> loss_floor;
  std::optional<std::string> config_name;
};

ImportedTraces import_traces(const std::string& path);

// Config files: INI with one section per run; keys of a [defaults] section
// apply to every other section.
std::vector<RunConfig> load_configs(const std::string& path);
RunConfig config_from_map(const std::string& name, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> config_to_map(const RunConfig& cfg);

}  // namespace smoothdiff
