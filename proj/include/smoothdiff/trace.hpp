#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "smoothdiff/estimators.hpp"

namespace smoothdiff {

struct TraceRecord {
  double wall_time_s = 0.0;
  std::uint64_t iter = 0;
  std::uint64_t evals = 0;
  double loss = 0.0;
  double param_error = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  /// Set when the run stopped on a non-finite state instead of its budget.
  std::optional<std::string> aborted;

  bool empty() const { return records.empty(); }
};

/// Stop conditions; whichever is hit first ends the run. Checked between
/// derivative estimates, so a run may overshoot by one estimate.
struct Budget {
  double seconds = std::numeric_limits<double>::infinity();
  std::uint64_t evals = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t max_iters = 1'000'000;
};

/// Records loss and parameter error against a budget. The loss is read from
/// an uncounted copy of the objective, so `evals` in the trace is exactly the
/// optimizer's usage. With a virtual clock, wall time is evals times a fixed
/// cost, which makes traces reproducible byte for byte.
class RunMonitor {
 public:
  RunMonitor(const Objective& obj, Objective::Function monitor_loss, Vector theta_true, Budget budget,
             std::optional<double> virtual_seconds_per_eval = std::nullopt);

  void record(std::uint64_t iter, const Vector& theta);
  bool exhausted(std::uint64_t iter) const;
  double elapsed_seconds() const;
  std::uint64_t evals() const;

  const ConvergenceTrace& trace() const { return trace_; }
  ConvergenceTrace take_trace() { return std::move(trace_); }
  void abort(const std::string& reason) { trace_.aborted = reason; }

 private:
  const Objective& obj_;
  Objective::Function loss_;
  Vector theta_true_;
  Budget budget_;
  std::optional<double> virtual_cost_;
  std::uint64_t start_evals_;
  double start_time_;
  ConvergenceTrace trace_;
};

}  // namespace smoothdiff
