#pragma once

#include <cstdint>
#include <sstream>
#include <string>

#include "rtmt/coordinator.hpp"
#include "rtmt/engine.hpp"
#include "rtmt/instance_json.hpp"
#include "rtmt/oracle.hpp"
#include "rtmt/policy_json.hpp"

namespace rtmt {

inline constexpr const char* kToolName = "rtmt";
inline constexpr const char* kToolVersion = "1.0.0";

// Header shared by every report. Objects keep sorted keys, so identical
// inputs give byte-identical output.
inline Json report_header(const std::string& command, const Instance& in, std::uint64_t seed, const Json& budgets) {
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"command", command},
          {"instance_hash", hex64(content_hash(to_json(in)))},
          {"seed", seed},
          {"budgets", budgets}};
}

inline Json to_json(const EvaluationReport& r) {
  Json j = {{"method", r.method}, {"total", r.total}, {"per_stage", r.per_stage}, {"off_path_keys", r.off_path_keys}};
  if (r.method == "monte_carlo") {
    j["mean"] = r.mean;
    j["std_error"] = r.std_error;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
  }
  return j;
}

inline Json to_json(const StructureReport& r) {
  return {{"global_min", r.global_min},
          {"structured_min", r.structured_min},
          {"gap", r.gap},
          {"global_count", r.global_count},
          {"structured_count", r.structured_count},
          {"pass", r.pass}};
}

inline Json to_json(const DecoderReport& r) {
  return {{"tau_cost", r.tau_cost},
          {"table_min", r.table_min},
          {"gap", r.gap},
          {"tau_completed_cost", r.tau_completed_cost},
          {"off_path_keys", r.off_path_keys},
          {"tables_enumerated", r.tables_enumerated},
          {"per_stage_min", r.per_stage_min},
          {"pass", r.pass}};
}

inline Json to_json(const MarkovReport& r) {
  return {{"max_deviation", r.max_deviation}, {"histories", r.histories}, {"pass", r.pass}};
}

inline Json to_json(const RandomizationReport& r) {
  return {{"deterministic_min", r.deterministic_min},
          {"global_min", r.global_min},
          {"mixtures", r.mixture_costs.size()},
          {"min_mixture_cost", r.min_mixture_cost},
          {"max_linearity_error", r.max_linearity_error},
          {"strategies", r.strategies},
          {"pass", r.pass}};
}

// Diagnostic dump of the reachable information-state graph.
inline Json graph_to_json(const ReachableXiGraph& g) {
  Json stages = Json::array();
  for (const auto& st : g.stages) {
    Json nodes = Json::array();
    for (const auto& nd : st) {
      Json edges = Json::array();
      for (const auto& out : nd.edges) {
        Json row = Json::array();
        for (const auto& e : out) row.push_back({{"z", e.z}, {"p", e.p}, {"target", e.target}});
        edges.push_back(row);
      }
      Json domain = Json::array();
      for (const auto& [x, b] : nd.domain) domain.push_back({x, b});
      nodes.push_back({{"state", json_detail::xi_to_json(nd.state)}, {"cost", nd.cost}, {"domain", domain}, {"actions", nd.actions}, {"edges", edges}});
    }
    stages.push_back(nodes);
  }
  return {{"focus", g.focus}, {"z_size", g.z_size}, {"beliefs", json_detail::pmfs_to_json(g.beliefs.values())}, {"stages", stages}};
}

inline Json to_json(const Trace& tr) {
  Json stages = Json::array();
  for (const auto& st : tr.stages) {
    stages.push_back({{"x", st.x},
                      {"z", st.z},
                      {"y", st.y},
                      {"m", st.m},
                      {"b", json_detail::pmfs_to_json(st.b)},
                      {"mu", json_detail::pmfs_to_json(st.mu)},
                      {"psi", st.psi.weights()},
                      {"estimate", st.estimate},
                      {"distortion", st.distortion}});
  }
  return {{"seed", tr.seed}, {"a", tr.a}, {"component", tr.component}, {"total", tr.total}, {"stages", stages}};
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

namespace detail {
inline void flatten(const Json& j, const std::string& prefix, std::ostringstream& os) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), os);
  } else if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) flatten(j[k], prefix + "[" + std::to_string(k) + "]", os);
  } else {
    std::string v = j.is_string() ? j.get<std::string>() : j.dump();
    if (v.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      v = q + "\"";
    }
    os << prefix << ',' << v << '\n';
  }
}
}  // namespace detail

// Two-column CSV (path, value) of every scalar in the report.
inline std::string dump_csv(const Json& j) {
  std::ostringstream os;
  os << "field,value\n";
  detail::flatten(j, "", os);
  return os.str();
}

}  // namespace rtmt
