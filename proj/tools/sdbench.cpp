// Benchmark driver: ensembles, sweeps, variance tables, trace summaries.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "smoothdiff/harness.hpp"

namespace sd = smoothdiff;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> budget_seconds;
  std::optional<std::uint64_t> budget_evals;
  std::optional<std::size_t> threads;
  bool deterministic = false;
};

void apply(const Overrides& o, sd::RunConfig& cfg) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.budget_seconds) {
    cfg.budget.seconds = *o.budget_seconds;
    cfg.budget.evals = std::numeric_limits<std::uint64_t>::max();
  }
  if (o.budget_evals) {
    cfg.budget.evals = *o.budget_evals;
    cfg.budget.seconds = std::numeric_limits<double>::infinity();
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.deterministic) cfg.deterministic = true;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

void print_summary_header(std::ostream& out) {
  out << "name,metric,fraction,reached,runs,median_time_s,median_evals\n";
}

void print_summary(std::ostream& out, const std::string& name, const std::string& metric,
                   const std::vector<sd::ThresholdStat>& stats) {
  for (const auto& s : stats)
    out << name << "," << metric << "," << s.fraction << "," << s.reached << "," << s.runs << ","
        << cell(s.median_time) << "," << cell(s.median_evals) << "\n";
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };
  {
    sd::KernelSpec spec(0.7, 3);
    sd::Vector tau(3);
    tau << 0.3, -0.5, 1.1;
    const double h = 1e-6;
    sd::Vector tp = tau, tm = tau;
    tp[1] += h;
    tm[1] -= h;
    const double fd = (sd::gaussian_pdf(tp, spec) - sd::gaussian_pdf(tm, spec)) / (2 * h);
    check("gradient kernel matches finite differences", std::abs(fd - sd::gradient_kernel(tau, 1, spec)) < 1e-6);
    sd::Vector root = tau;
    root[0] = 0.7;
    check("diagonal Hessian kernel vanishes at sigma",
          std::abs(sd::hessian_kernel(root, sd::KernelElement::hessian_diag(0), spec)) < 1e-15);
  }
  check("hessian_diag_cdf(-sigma) == 0.25", sd::hessian_diag_cdf(-1.3, 1.3) == 0.25);
  {
    const auto& table = sd::default_hessian_diag_table();
    double worst = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double xi = k / 1000.0;
      worst = std::max(worst, std::abs(sd::hessian_diag_cdf(table.lookup(xi), 1.0) - xi));
    }
    check("tabulated inverse round trip <= 1e-4", worst <= 1e-4);
  }
  {
    const sd::Task quad = sd::quad_task();
    const sd::Objective obj = quad.objective();
    sd::Vector theta(2);
    theta << 1.0, 1.0;
    sd::EstimatorConfig cfg(sd::KernelSpec(0.5, 2), 20000, sd::SamplingMode::AggregateIS);
    sd::RngStream rng(1, 1);
    const auto g = sd::estimate_gradient(obj, theta, cfg, rng);
    check("quad gradient estimate near (17.5, 17.5)", (g.g - sd::Vector::Constant(2, 17.5)).norm() < 0.5);
    const std::uint64_t before = obj.eval_count();
    cfg.samples = 3;
    (void)sd::estimate_hessian(obj, theta, cfg, rng);
    check("aggregate Hessian costs 2 evaluations per pair", obj.eval_count() - before == 6);
    sd::OptimizerState st = sd::OptimizerState::at(theta);
    st = sd::newton_step(st, {quad.analytic_grad(theta), 0}, {quad.analytic_hess(theta), 0}, sd::TrustRegion{});
    check("exact Newton step solves quad", st.theta.norm() < 1e-10);
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smoothed-derivative optimizer benchmark"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path, out_path, format = "csv", section;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", ov.seed, "Base seed; run k uses seed + k");
    auto* secs = sub->add_option("--budget-seconds", ov.budget_seconds, "Wall-clock budget per run");
    auto* evals = sub->add_option("--budget-evals", ov.budget_evals, "Objective-evaluation budget per run");
    secs->excludes(evals);
    sub->add_option("--format", format, "Trace format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", ov.threads, "Concurrent ensemble members")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", ov.deterministic, "Virtual clock; byte-identical traces");
  };

  auto* run = app.add_subcommand("run", "Run one ensemble from a config section");
  add_common(run);
  run->add_option("--section", section, "Section to run (default: first)");
  run->add_option("--out", out_path, "Trace output file");

  auto* sweep = app.add_subcommand("sweep", "Run every section of a config (method x task matrix)");
  add_common(sweep);
  sweep->add_option("--out", out_path, "Output directory for per-section traces");

  std::string task_name = "neg_gaussian", theta_text, budgets_text = "120,480,1920,7680",
              orders_text = "G,H,HVP", modes_text = "per_element,aggregate,uniform";
  double var_sigma = 1.0;
  std::size_t reps = 100;
  std::uint64_t var_seed = 0;
  auto* variance = app.add_subcommand("variance", "Estimator variance at equal evaluation budgets");
  variance->add_option("--task", task_name, "Task name");
  variance->add_option("--theta", theta_text, "Comma-separated point (default: task's theta_true + 0.5)");
  variance->add_option("--sigma", var_sigma, "Kernel bandwidth");
  variance->add_option("--budgets", budgets_text, "Comma-separated evaluation budgets");
  variance->add_option("--orders", orders_text, "Subset of G,H,HVP");
  variance->add_option("--modes", modes_text, "Subset of per_element,aggregate,uniform");
  variance->add_option("--repetitions", reps, "Repetitions per cell");
  variance->add_option("--seed", var_seed, "Seed");
  variance->add_option("--out", out_path, "Output CSV (default stdout)");

  std::vector<std::string> files;
  std::optional<double> loss_floor;
  auto* summarize = app.add_subcommand("summarize", "Threshold table from trace files");
  summarize->add_option("files", files, "Trace files (csv or json)")->required()->check(CLI::ExistingFile);
  summarize->add_option("--loss-floor", loss_floor, "Loss at the optimum for CSV input (default 0)");

  auto* self = app.add_subcommand("selftest", "Quick kernel, sampler and estimator checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run || *sweep) {
      auto configs = sd::load_configs(config_path);
      if (*run) {
        auto it = configs.begin();
        if (!section.empty()) {
          it = std::find_if(configs.begin(), configs.end(), [&](const auto& c) { return c.name == section; });
          if (it == configs.end()) throw sd::ContractViolation("no section [" + section + "] in " + config_path);
        }
        configs = {*it};
      }
      if (*sweep && !out_path.empty()) std::filesystem::create_directories(out_path);
      print_summary_header(std::cout);
      for (auto& cfg : configs) {
        apply(ov, cfg);
        const auto result = sd::run_ensemble(cfg);
        if (!out_path.empty()) {
          const std::string path =
              *sweep ? (std::filesystem::path(out_path) / (cfg.name + "." + format)).string() : out_path;
          sd::export_traces(result, path, format);
        }
        print_summary(std::cout, cfg.name, "loss", result.loss_thresholds);
        print_summary(std::cout, cfg.name, "param_error", result.param_thresholds);
      }
      return 0;
    }
    if (*variance) {
      const sd::Task task = sd::make_task(task_name);
      sd::Vector theta = task.theta_true.array() + 0.5;
      if (!theta_text.empty()) {
        const auto parts = split(theta_text);
        theta.resize(static_cast<Eigen::Index>(parts.size()));
        for (std::size_t k = 0; k < parts.size(); ++k) theta[static_cast<Eigen::Index>(k)] = std::stod(parts[k]);
      }
      sd::VarianceOptions opt;
      opt.orders = split(orders_text);
      opt.modes.clear();
      for (const auto& m : split(modes_text)) opt.modes.push_back(sd::parse_sampling_mode(m));
      opt.budgets.clear();
      for (const auto& b : split(budgets_text)) opt.budgets.push_back(std::stoull(b));
      opt.repetitions = reps;
      opt.sigma = var_sigma;
      opt.seed = var_seed;
      const auto rows = sd::variance_report(task, theta, opt);
      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot open '" + out_path + "' for writing");
      }
      std::ostream& out = out_path.empty() ? std::cout : file;
      out << "order,mode,budget_evals,samples,mean_variance,log_budget,log_variance\n";
      for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%s,%llu,%zu,%.17g,%.6f,%.6f\n", r.order.c_str(),
                      sd::to_string(r.mode).c_str(), static_cast<unsigned long long>(r.budget_evals), r.samples,
                      r.mean_variance, std::log(static_cast<double>(r.budget_evals)), std::log(r.mean_variance));
        out << buf;
      }
      for (const auto& order : opt.orders)
        for (auto mode : opt.modes)
          std::cerr << "slope " << order << " " << sd::to_string(mode) << " " << sd::variance_slope(rows, order, mode)
                    << "\n";
      return 0;
    }
    if (*summarize) {
      print_summary_header(std::cout);
      for (const auto& f : files) {
        const auto imported = sd::import_traces(f);
        const double floor = loss_floor.value_or(imported.loss_floor.value_or(0.0));
        const std::string name = imported.config_name.value_or(std::filesystem::path(f).stem().string());
        print_summary(std::cout, name, "loss", sd::compute_thresholds(imported.traces, true, floor));
        print_summary(std::cout, name, "param_error", sd::compute_thresholds(imported.traces, false, floor));
      }
      return 0;
    }
    if (*self) return selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
