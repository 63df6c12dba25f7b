#include "smoothdiff/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace smoothdiff {

namespace {

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

EstimatorConfig estimator_config(const RunConfig& cfg, std::size_t dim, double sigma) {
  EstimatorConfig e(KernelSpec(sigma, dim), cfg.samples, cfg.sampling_mode());
  e.hvp_epsilon = cfg.hvp_epsilon_rel * sigma;
  e.control_variate = cfg.control_variate;
  return e;
}

std::uint64_t pair_evals(const std::string& order, SamplingMode mode, std::size_t n) {
  if (order == "G") return gradient_evals_per_pair(mode, n);
  if (order == "H") return hessian_evals_per_pair(mode, n);
  if (order == "HVP") return hvp_evals_per_pair(mode, n);
  throw ContractViolation("unknown derivative order '" + order + "'");
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::FD:
      return "FD";
    case Method::FR22:
      return "FR22";
    case Method::OurG:
      return "OurG";
    case Method::OurH:
      return "OurH";
    case Method::OurHVP:
      return "OurHVP";
    case Method::OurHVPA:
      return "OurHVPA";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::FD, Method::FR22, Method::OurG, Method::OurH, Method::OurHVP, Method::OurHVPA})
    if (to_string(m) == name) return m;
  throw ContractViolation("unknown method '" + name + "'");
}

bool is_second_order(Method method) {
  return method == Method::OurH || method == Method::OurHVP || method == Method::OurHVPA;
}

void RunConfig::validate() const {
  if (samples < 1) throw ContractViolation("samples must be at least 1");
  SigmaSchedule{sigma_start, sigma_end, sigma_iters}.validate();
  if (ensemble < 1) throw ContractViolation("ensemble must have at least one run");
  if (threads < 1) throw ContractViolation("threads must be at least 1");
  if (!(fd_step > 0.0)) throw ContractViolation("fd_step must be positive");
  if (!(hvp_epsilon_rel > 0.0)) throw ContractViolation("hvp_epsilon must be positive");
  if (!(seconds_per_eval > 0.0)) throw ContractViolation("seconds_per_eval must be positive");
  if (budget.evals == std::numeric_limits<std::uint64_t>::max() && !std::isfinite(budget.seconds) &&
      budget.max_iters >= 1'000'000)
    throw ContractViolation("run '" + name + "' needs a budget (seconds, evals or max_iters)");
  if (is_second_order(method)) {
    if (lr) throw ContractViolation("lr applies to first-order methods only, not " + to_string(method));
    if (!trust_region) throw ContractViolation(to_string(method) + " needs trust_region");
    TrustRegion{*trust_region}.validate();
    if (ls_iters && *ls_iters < 1) throw ContractViolation("ls_iters must be at least 1");
  } else {
    if (!lr) throw ContractViolation(to_string(method) + " needs lr");
    if (!(*lr > 0.0)) throw ContractViolation("lr must be positive");
    if (trust_region || ls_iters || ls_tol || recompute)
      throw ContractViolation("trust_region, ls_iters, ls_tol and recompute apply to second-order methods only");
  }
}

SamplingMode RunConfig::sampling_mode() const {
  if (sampling) return *sampling;
  return method == Method::OurHVPA ? SamplingMode::AggregateIS : SamplingMode::PerElementIS;
}

std::optional<std::size_t> first_crossing(const ConvergenceTrace& trace, double fraction, bool use_loss,
                                          double loss_floor) {
  if (trace.records.empty()) return std::nullopt;
  auto err = [&](const TraceRecord& r) { return use_loss ? r.loss - loss_floor : r.param_error; };
  const double e0 = err(trace.records.front());
  if (!(e0 > 0.0)) return 0;
  const double target = (1.0 - fraction) * e0;
  for (std::size_t k = 0; k < trace.records.size(); ++k)
    if (err(trace.records[k]) <= target) return k;
  return std::nullopt;
}

std::vector<ThresholdStat> compute_thresholds(const std::vector<ConvergenceTrace>& traces, bool use_loss,
                                              double loss_floor, const std::vector<double>& fractions) {
  std::vector<ThresholdStat> out;
  for (double f : fractions) {
    ThresholdStat s;
    s.fraction = f;
    s.runs = traces.size();
    std::vector<double> times, evals;
    for (const auto& t : traces) {
      if (const auto k = first_crossing(t, f, use_loss, loss_floor)) {
        times.push_back(t.records[*k].wall_time_s);
        evals.push_back(static_cast<double>(t.records[*k].evals));
      }
    }
    s.reached = times.size();
    if (2 * s.reached >= s.runs && s.reached > 0) {
      s.median_time = median_of(times);
      s.median_evals = median_of(evals);
    }
    out.push_back(s);
  }
  return out;
}

ConvergenceTrace run_single(const RunConfig& cfg, const Task& task, std::size_t run_index) {
  cfg.validate();
  const Objective obj = task.objective();
  RngStream init_rng(cfg.seed + run_index, 0);
  RngStream rng(cfg.seed + run_index, 1);
  const Vector init = task.init_sampler(init_rng);
  RunMonitor monitor(obj, task.function, task.theta_true, cfg.budget,
                     cfg.deterministic ? std::optional<double>(cfg.seconds_per_eval) : std::nullopt);
  const SigmaSchedule schedule{cfg.sigma_start, cfg.sigma_end, cfg.sigma_iters};
  const std::size_t n = task.dim;

  GradientProvider gradient;
  switch (cfg.method) {
    case Method::FD:
      gradient = [&](const Vector& theta, double, RngStream&) { return estimate_gradient_fd(obj, theta, cfg.fd_step); };
      break;
    case Method::FR22:
      gradient = [&](const Vector& theta, double sigma, RngStream& r) {
        return estimate_gradient_fr22(obj, theta, estimator_config(cfg, n, sigma), r);
      };
      break;
    default:
      gradient = [&](const Vector& theta, double sigma, RngStream& r) {
        return estimate_gradient(obj, theta, estimator_config(cfg, n, sigma), r);
      };
  }

  if (!is_second_order(cfg.method)) {
    GdOptions opt;
    opt.schedule = schedule;
    opt.lr = *cfg.lr;
    return gd_run(monitor, gradient, init, opt, rng);
  }
  CurvatureProvider curvature;
  if (cfg.method == Method::OurH) {
    curvature.hessian = [&](const Vector& theta, double sigma, RngStream& r) {
      return estimate_hessian(obj, theta, estimator_config(cfg, n, sigma), r);
    };
  } else {
    curvature.hvp = [&](const Vector& theta, const Vector& v, double sigma, RngStream& r) {
      return estimate_hvp(obj, theta, v, estimator_config(cfg, n, sigma), r);
    };
  }
  NewtonCgOptions opt;
  opt.schedule = schedule;
  opt.trust_region = TrustRegion{*cfg.trust_region};
  opt.ls_iters = cfg.ls_iters.value_or(2);
  opt.ls_tol = cfg.ls_tol.value_or(1e-10);
  opt.recompute = cfg.recompute.value_or(0);
  return newton_cg_run(monitor, gradient, curvature, init, opt, rng);
}

EnsembleResult run_ensemble(const RunConfig& cfg) {
  cfg.validate();
  const Task task = make_task(cfg.task);
  EnsembleResult result;
  result.config = cfg;
  result.loss_floor = task.loss_floor();
  result.traces.resize(cfg.ensemble);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t k = next++; k < cfg.ensemble; k = next++) {
      try {
        result.traces[k] = run_single(cfg, task, k);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.threads, cfg.ensemble);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  result.loss_thresholds = compute_thresholds(result.traces, true, result.loss_floor);
  result.param_thresholds = compute_thresholds(result.traces, false, result.loss_floor);
  return result;
}

std::vector<VarianceRow> variance_report(const Task& task, const Vector& theta, const VarianceOptions& options) {
  if (static_cast<std::size_t>(theta.size()) != task.dim) throw ContractViolation("theta length mismatch");
  if (options.repetitions < 2) throw ContractViolation("variance needs at least two repetitions");
  const std::size_t n = task.dim;
  const Objective obj = task.objective();
  Vector dir = options.direction;
  if (dir.size() == 0) dir = Vector::Unit(static_cast<Eigen::Index>(n), 0);

  std::vector<VarianceRow> rows;
  std::uint64_t stream_base = 0;
  for (const auto& order : options.orders) {
    for (SamplingMode mode : options.modes) {
      for (std::uint64_t budget : options.budgets) {
        stream_base += 1u << 20;
        const std::uint64_t per_pair = pair_evals(order, mode, n);
        VarianceRow row{order, mode, 0, std::max<std::uint64_t>(1, budget / per_pair), {}, {}, 0.0};
        row.budget_evals = row.samples * per_pair;
        EstimatorConfig cfg(KernelSpec(options.sigma, n), row.samples, mode);
        cfg.control_variate = options.control_variate;
        std::vector<Eigen::VectorXd> draws;
        for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
          RngStream rng(options.seed, stream_base + rep);
          if (order == "G") {
            draws.push_back(estimate_gradient(obj, theta, cfg, rng).g);
          } else if (order == "HVP") {
            draws.push_back(estimate_hvp(obj, theta, dir, cfg, rng).hv);
          } else {
            const Matrix h = estimate_hessian(obj, theta, cfg, rng).h;
            Vector upper(static_cast<Eigen::Index>(n * (n + 1) / 2));
            Eigen::Index k = 0;
            for (Eigen::Index i = 0; i < h.rows(); ++i)
              for (Eigen::Index j = i; j < h.cols(); ++j) upper[k++] = h(i, j);
            draws.push_back(upper);
          }
        }
        const auto m = draws.front().size();
        Vector mean = Vector::Zero(m);
        for (const auto& d : draws) mean += d;
        mean /= static_cast<double>(draws.size());
        Vector var = Vector::Zero(m);
        for (const auto& d : draws) var += (d - mean).cwiseAbs2();
        var /= static_cast<double>(draws.size() - 1);
        row.element_mean.assign(mean.data(), mean.data() + m);
        row.element_variance.assign(var.data(), var.data() + m);
        row.mean_variance = var.mean();
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

double variance_slope(const std::vector<VarianceRow>& rows, const std::string& order, SamplingMode mode) {
  std::vector<double> x, y;
  for (const auto& r : rows)
    if (r.order == order && r.mode == mode && r.mean_variance > 0.0) {
      x.push_back(std::log(static_cast<double>(r.budget_evals)));
      y.push_back(std::log(r.mean_variance));
    }
  if (x.size() < 2) throw ContractViolation("slope needs at least two budgets");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k] / n;
    my += y[k] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  return sxy / sxx;
}

}  // namespace smoothdiff
