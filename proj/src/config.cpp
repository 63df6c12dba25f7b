#include <cmath>
#include <cstdio>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "smoothdiff/harness.hpp"

namespace smoothdiff {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ContractViolation("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ContractViolation("config key '" + key + "': '" + v + "' is not a nonnegative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ContractViolation("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

RunConfig config_from_map(const std::string& name, const std::map<std::string, std::string>& kv) {
  RunConfig c;
  c.name = name;
  for (const auto& [key, v] : kv) {
    if (key == "name") c.name = v;
    else if (key == "task") c.task = v;
    else if (key == "method") c.method = parse_method(v);
    else if (key == "samples") c.samples = to_uint(key, v);
    else if (key == "sigma_start") c.sigma_start = to_double(key, v);
    else if (key == "sigma_end") c.sigma_end = to_double(key, v);
    else if (key == "sigma_iters") c.sigma_iters = to_uint(key, v);
    else if (key == "lr") c.lr = to_double(key, v);
    else if (key == "trust_region") c.trust_region = to_double(key, v);
    else if (key == "ls_iters") c.ls_iters = to_uint(key, v);
    else if (key == "ls_tol") c.ls_tol = to_double(key, v);
    else if (key == "recompute") c.recompute = to_uint(key, v);
    else if (key == "sampling") c.sampling = parse_sampling_mode(v);
    else if (key == "control_variate") c.control_variate = to_bool(key, v);
    else if (key == "hvp_epsilon") c.hvp_epsilon_rel = to_double(key, v);
    else if (key == "fd_step") c.fd_step = to_double(key, v);
    else if (key == "seed") c.seed = to_uint(key, v);
    else if (key == "budget_seconds") c.budget.seconds = to_double(key, v);
    else if (key == "budget_evals") c.budget.evals = to_uint(key, v);
    else if (key == "max_iters") c.budget.max_iters = to_uint(key, v);
    else if (key == "ensemble") c.ensemble = to_uint(key, v);
    else if (key == "threads") c.threads = to_uint(key, v);
    else if (key == "deterministic") c.deterministic = to_bool(key, v);
    else if (key == "seconds_per_eval") c.seconds_per_eval = to_double(key, v);
    else throw ContractViolation("section [" + name + "]: unknown key '" + key + "'");
  }
  return c;
}

std::map<std::string, std::string> config_to_map(const RunConfig& c) {
  std::map<std::string, std::string> m;
  m["name"] = c.name;
  m["task"] = c.task;
  m["method"] = to_string(c.method);
  m["samples"] = std::to_string(c.samples);
  m["sigma_start"] = fmt17(c.sigma_start);
  m["sigma_end"] = fmt17(c.sigma_end);
  m["sigma_iters"] = std::to_string(c.sigma_iters);
  if (c.lr) m["lr"] = fmt17(*c.lr);
  if (c.trust_region) m["trust_region"] = fmt17(*c.trust_region);
  if (c.ls_iters) m["ls_iters"] = std::to_string(*c.ls_iters);
  if (c.ls_tol) m["ls_tol"] = fmt17(*c.ls_tol);
  if (c.recompute) m["recompute"] = std::to_string(*c.recompute);
  m["sampling"] = to_string(c.sampling_mode());
  m["control_variate"] = c.control_variate ? "true" : "false";
  m["hvp_epsilon"] = fmt17(c.hvp_epsilon_rel);
  m["fd_step"] = fmt17(c.fd_step);
  m["seed"] = std::to_string(c.seed);
  if (std::isfinite(c.budget.seconds)) m["budget_seconds"] = fmt17(c.budget.seconds);
  if (c.budget.evals != std::numeric_limits<std::uint64_t>::max()) m["budget_evals"] = std::to_string(c.budget.evals);
  m["max_iters"] = std::to_string(c.budget.max_iters);
  m["ensemble"] = std::to_string(c.ensemble);
  m["threads"] = std::to_string(c.threads);
  m["deterministic"] = c.deterministic ? "true" : "false";
  m["seconds_per_eval"] = fmt17(c.seconds_per_eval);
  return m;
}

std::vector<RunConfig> load_configs(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ContractViolation("config '" + path + "': " + e.what());
  }
  std::map<std::string, std::string> defaults;
  if (const auto d = tree.get_child_optional("defaults"))
    for (const auto& [k, v] : *d) defaults[k] = v.data();
  std::vector<RunConfig> out;
  for (const auto& [section, body] : tree) {
    if (section == "defaults") continue;
    if (!body.data().empty())
      throw ContractViolation("config '" + path + "': key '" + section + "' outside a section");
    auto kv = defaults;
    for (const auto& [k, v] : body) kv[k] = v.data();
    out.push_back(config_from_map(section, kv));
  }
  if (out.empty()) throw ContractViolation("config '" + path + "' has no run sections");
  return out;
}

}  // namespace smoothdiff
