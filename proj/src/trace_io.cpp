#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smoothdiff/harness.hpp"

namespace smoothdiff {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json thresholds_json(const std::vector<ThresholdStat>& stats) {
  json arr = json::array();
  for (const auto& s : stats)
    arr.push_back({{"fraction", s.fraction},
                   {"reached", s.reached},
                   {"runs", s.runs},
                   {"median_time_s", optional_json(s.median_time)},
                   {"median_evals", optional_json(s.median_evals)}});
  return arr;
}

void require_nonempty(const std::vector<ConvergenceTrace>& traces) {
  if (traces.empty()) throw ContractViolation("refusing to export: no traces");
  for (std::size_t k = 0; k < traces.size(); ++k)
    if (traces[k].records.empty()) throw ContractViolation("refusing to export: trace " + std::to_string(k) + " is empty");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double json_double(const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); }

ImportedTraces parse_json(const std::string& text, const std::string& path) {
  ImportedTraces out;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error("'" + path + "': " + e.what());
  }
  if (doc.contains("loss_floor")) out.loss_floor = json_double(doc["loss_floor"]);
  if (doc.contains("config") && doc["config"].contains("name")) out.config_name = doc["config"]["name"].get<std::string>();
  for (const auto& t : doc.at("traces")) {
    ConvergenceTrace trace;
    if (t.contains("aborted") && !t["aborted"].is_null()) trace.aborted = t["aborted"].get<std::string>();
    for (const auto& r : t.at("records")) {
      TraceRecord rec;
      rec.wall_time_s = json_double(r.at("wall_time_s"));
      rec.iter = r.at("iter").get<std::uint64_t>();
      rec.evals = r.at("evals").get<std::uint64_t>();
      rec.loss = json_double(r.at("loss"));
      rec.param_error = json_double(r.at("param_error"));
      trace.records.push_back(rec);
    }
    out.traces.push_back(std::move(trace));
  }
  return out;
}

ImportedTraces parse_csv(const std::string& text, const std::string& path) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("'" + path + "': header must be '" + std::string(kCsvHeader) + "'");
  ImportedTraces out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell[6];
    for (auto& c : cell) std::getline(fields, c, ',');
    try {
      const auto run = static_cast<std::size_t>(std::stoull(cell[0]));
      if (run >= out.traces.size()) out.traces.resize(run + 1);
      TraceRecord r;
      r.wall_time_s = std::strtod(cell[1].c_str(), nullptr);
      r.iter = std::stoull(cell[2]);
      r.evals = std::stoull(cell[3]);
      r.loss = std::strtod(cell[4].c_str(), nullptr);
      r.param_error = std::strtod(cell[5].c_str(), nullptr);
      out.traces[run].records.push_back(r);
    } catch (const std::exception&) {
      throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": malformed record");
    }
  }
  return out;
}

}  // namespace

std::string traces_to_csv(const std::vector<ConvergenceTrace>& traces) {
  require_nonempty(traces);
  std::string out = std::string(kCsvHeader) + "\n";
  for (std::size_t k = 0; k < traces.size(); ++k)
    for (const auto& r : traces[k].records)
      out += std::to_string(k) + "," + fmt17(r.wall_time_s) + "," + std::to_string(r.iter) + "," +
             std::to_string(r.evals) + "," + fmt17(r.loss) + "," + fmt17(r.param_error) + "\n";
  return out;
}

std::string result_to_json(const EnsembleResult& result) {
  require_nonempty(result.traces);
  json doc;
  json cfg = json::object();
  for (const auto& [k, v] : config_to_map(result.config)) cfg[k] = v;
  doc["config"] = cfg;
  doc["loss_floor"] = number_or_null(result.loss_floor);
  doc["thresholds"] = {{"loss", thresholds_json(result.loss_thresholds)},
                       {"param_error", thresholds_json(result.param_thresholds)}};
  json traces = json::array();
  for (std::size_t k = 0; k < result.traces.size(); ++k) {
    const auto& t = result.traces[k];
    json records = json::array();
    for (const auto& r : t.records)
      records.push_back({{"run", k},
                         {"wall_time_s", number_or_null(r.wall_time_s)},
                         {"iter", r.iter},
                         {"evals", r.evals},
                         {"loss", number_or_null(r.loss)},
                         {"param_error", number_or_null(r.param_error)}});
    traces.push_back({{"run", k}, {"aborted", t.aborted ? json(*t.aborted) : json(nullptr)}, {"records", records}});
  }
  doc["traces"] = traces;
  return doc.dump(1) + "\n";
}

void export_traces(const EnsembleResult& result, const std::string& path, const std::string& format) {
  std::string body;
  if (format == "csv")
    body = traces_to_csv(result.traces);
  else if (format == "json")
    body = result_to_json(result);
  else
    throw ContractViolation("unknown trace format '" + format + "' (csv or json)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ImportedTraces import_traces(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  ImportedTraces out = first != std::string::npos && text[first] == '{' ? parse_json(text, path) : parse_csv(text, path);
  if (out.traces.empty()) throw std::runtime_error("'" + path + "' contains no traces");
  return out;
}

}  // namespace smoothdiff
