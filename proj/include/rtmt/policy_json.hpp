#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rtmt/engine.hpp"
#include "rtmt/errors.hpp"
#include "rtmt/instance_json.hpp"
#include "rtmt/policies.hpp"
#include "rtmt/xi.hpp"

namespace rtmt {

// Policy file: {"encoders": [...], "decoder": {...}, "memory_rules": [...]}.
// Every encoder is {"kind": ..., ...}; tables are per-stage lists of entries
// with explicit key fields and the emitted symbol "z".

namespace json_detail {

inline Json pmfs_to_json(const std::vector<Pmf>& v) {
  Json out = Json::array();
  for (const auto& p : v) out.push_back(p.weights());
  return out;
}

inline std::vector<Pmf> pmfs_from_json(const Json& j, const std::string& path) {
  std::vector<Pmf> out;
  if (!j.is_array()) throw SchemaError(path + ": expected an array");
  for (std::size_t k = 0; k < j.size(); ++k) out.emplace_back(get_as<std::vector<double>>(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

inline Json xi_to_json(const XiState& xi) {
  Json out = Json::array();
  for (const auto& e : xi.entries) out.push_back({{"x", e.x}, {"b", e.b}, {"p", e.p}});
  return out;
}

inline XiState xi_from_json(const Json& j, const std::string& path) {
  XiState xi;
  if (!j.is_array()) throw SchemaError(path + ": expected an array");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    reject_unknown(j[k], p, {"x", "b", "p"});
    xi.entries.push_back({get_as<int>(require(j[k], p, "x"), p + ".x"), get_as<int>(require(j[k], p, "b"), p + ".b"),
                          get_as<double>(require(j[k], p, "p"), p + ".p")});
  }
  return xi;
}

inline const Json& stages_of(const Json& j, const std::string& path) {
  const Json& st = require(j, path, "stages");
  if (!st.is_array()) throw SchemaError(path + ".stages: expected an array");
  return st;
}

}  // namespace json_detail

inline Json encoder_to_json(const DeterministicEncoder& enc) {
  return std::visit(
      [](const auto& e) -> Json {
        using E = std::decay_t<decltype(e)>;
        Json out;
        if constexpr (std::is_same_v<E, ConstantEncoder>) {
          out = {{"kind", "constant"}, {"z", e.z}};
        } else if constexpr (std::is_same_v<E, GeneralEncoder>) {
          out["kind"] = "general";
          Json stages = Json::array();
          for (const auto& st : e.stages) {
            Json rows = Json::array();
            for (const auto& [k, z] : st) rows.push_back({{"x", k.first}, {"past", k.second}, {"z", z}});
            stages.push_back(rows);
          }
          out["stages"] = stages;
        } else if constexpr (std::is_same_v<E, StructuredEncoder>) {
          out["kind"] = "structured";
          out["b_values"] = json_detail::pmfs_to_json(e.b_values);
          Json mus = Json::array();
          for (const auto& m : e.mu_values) mus.push_back(json_detail::pmfs_to_json(m));
          out["mu_values"] = mus;
          Json stages = Json::array();
          for (const auto& st : e.stages) {
            Json rows = Json::array();
            for (const auto& [k, z] : st) rows.push_back({{"x", k[0]}, {"b", k[1]}, {"mu", k[2]}, {"z", z}});
            stages.push_back(rows);
          }
          out["stages"] = stages;
        } else if constexpr (std::is_same_v<E, BeliefHistoryEncoder>) {
          out["kind"] = "belief_history";
          out["b_values"] = json_detail::pmfs_to_json(e.b_values);
          Json stages = Json::array();
          for (const auto& st : e.stages) {
            Json rows = Json::array();
            for (const auto& [k, z] : st) rows.push_back({{"x", std::get<0>(k)}, {"b", std::get<1>(k)}, {"past", std::get<2>(k)}, {"z", z}});
            stages.push_back(rows);
          }
          out["stages"] = stages;
        } else if constexpr (std::is_same_v<E, CoordinatorRule>) {
          out["kind"] = "coordinator";
          out["focus"] = e.focus;
          out["b_values"] = json_detail::pmfs_to_json(e.b_values);
          Json stages = Json::array();
          for (const auto& st : e.stages) {
            Json rows = Json::array();
            for (const auto& [xi, w] : st) {
              Json dom = Json::array();
              for (const auto& [x, b] : w.domain()) dom.push_back({x, b});
              rows.push_back({{"xi", json_detail::xi_to_json(xi)}, {"domain", dom}, {"z", w.symbols()}});
            }
            stages.push_back(rows);
          }
          out["stages"] = stages;
        } else {
          out["kind"] = "xi_structured";
          out["focus"] = e.focus;
          out["b_values"] = json_detail::pmfs_to_json(e.b_values);
          Json xis = Json::array();
          for (const auto& st : e.xi_values) {
            Json l = Json::array();
            for (const auto& xi : st) l.push_back(json_detail::xi_to_json(xi));
            xis.push_back(l);
          }
          out["xi_values"] = xis;
          Json stages = Json::array();
          for (const auto& st : e.stages) {
            Json rows = Json::array();
            for (const auto& [k, z] : st) rows.push_back({{"x", k[0]}, {"b", k[1]}, {"xi", k[2]}, {"z", z}});
            stages.push_back(rows);
          }
          out["stages"] = stages;
        }
        return out;
      },
      enc);
}

inline DeterministicEncoder encoder_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  const auto kind = get_as<std::string>(require(j, path, "kind"), path + ".kind");
  auto row_path = [&](std::size_t s, std::size_t r) { return path + ".stages[" + std::to_string(s) + "][" + std::to_string(r) + "]"; };
  if (kind == "constant") {
    reject_unknown(j, path, {"kind", "z"});
    return ConstantEncoder{get_as<int>(require(j, path, "z"), path + ".z")};
  }
  if (kind == "general") {
    reject_unknown(j, path, {"kind", "stages"});
    GeneralEncoder g;
    const Json& st = stages_of(j, path);
    for (std::size_t s = 0; s < st.size(); ++s) {
      auto& table = g.stages.emplace_back();
      for (std::size_t r = 0; r < st[s].size(); ++r) {
        const Json& row = st[s][r];
        const auto p = row_path(s, r);
        reject_unknown(row, p, {"x", "past", "z"});
        table[{get_as<std::vector<int>>(require(row, p, "x"), p + ".x"), get_as<std::vector<int>>(require(row, p, "past"), p + ".past")}] =
            get_as<int>(require(row, p, "z"), p + ".z");
      }
    }
    return g;
  }
  if (kind == "structured") {
    reject_unknown(j, path, {"kind", "b_values", "mu_values", "stages"});
    StructuredEncoder e;
    e.b_values = pmfs_from_json(require(j, path, "b_values"), path + ".b_values");
    const Json& mus = require(j, path, "mu_values");
    for (std::size_t s = 0; s < mus.size(); ++s) e.mu_values.push_back(pmfs_from_json(mus[s], path + ".mu_values[" + std::to_string(s) + "]"));
    const Json& st = stages_of(j, path);
    for (std::size_t s = 0; s < st.size(); ++s) {
      auto& table = e.stages.emplace_back();
      for (std::size_t r = 0; r < st[s].size(); ++r) {
        const Json& row = st[s][r];
        const auto p = row_path(s, r);
        reject_unknown(row, p, {"x", "b", "mu", "z"});
        table[{get_as<int>(require(row, p, "x"), p + ".x"), get_as<int>(require(row, p, "b"), p + ".b"),
               get_as<int>(require(row, p, "mu"), p + ".mu")}] = get_as<int>(require(row, p, "z"), p + ".z");
      }
    }
    return e;
  }
  if (kind == "belief_history") {
    reject_unknown(j, path, {"kind", "b_values", "stages"});
    BeliefHistoryEncoder e;
    e.b_values = pmfs_from_json(require(j, path, "b_values"), path + ".b_values");
    const Json& st = stages_of(j, path);
    for (std::size_t s = 0; s < st.size(); ++s) {
      auto& table = e.stages.emplace_back();
      for (std::size_t r = 0; r < st[s].size(); ++r) {
        const Json& row = st[s][r];
        const auto p = row_path(s, r);
        reject_unknown(row, p, {"x", "b", "past", "z"});
        table[{get_as<int>(require(row, p, "x"), p + ".x"), get_as<int>(require(row, p, "b"), p + ".b"),
               get_as<std::vector<int>>(require(row, p, "past"), p + ".past")}] = get_as<int>(require(row, p, "z"), p + ".z");
      }
    }
    return e;
  }
  if (kind == "coordinator") {
    reject_unknown(j, path, {"kind", "focus", "b_values", "stages"});
    CoordinatorRule e;
    e.focus = get_as<int>(require(j, path, "focus"), path + ".focus");
    e.b_values = pmfs_from_json(require(j, path, "b_values"), path + ".b_values");
    const Json& st = stages_of(j, path);
    for (std::size_t s = 0; s < st.size(); ++s) {
      auto& list = e.stages.emplace_back();
      for (std::size_t r = 0; r < st[s].size(); ++r) {
        const Json& row = st[s][r];
        const auto p = row_path(s, r);
        reject_unknown(row, p, {"xi", "domain", "z"});
        std::vector<std::pair<int, int>> dom;
        for (const auto& d : get_as<std::vector<std::vector<int>>>(require(row, p, "domain"), p + ".domain")) {
          if (d.size() != 2) throw SchemaError(p + ".domain: entries must be [x, b] pairs");
          dom.emplace_back(d[0], d[1]);
        }
        list.emplace_back(xi_from_json(require(row, p, "xi"), p + ".xi"),
                          PartialEncoder(std::move(dom), get_as<std::vector<int>>(require(row, p, "z"), p + ".z")));
      }
    }
    return e;
  }
  if (kind == "xi_structured") {
    reject_unknown(j, path, {"kind", "focus", "b_values", "xi_values", "stages"});
    XiStructuredEncoder e;
    e.focus = get_as<int>(require(j, path, "focus"), path + ".focus");
    e.b_values = pmfs_from_json(require(j, path, "b_values"), path + ".b_values");
    const Json& xis = require(j, path, "xi_values");
    for (std::size_t s = 0; s < xis.size(); ++s) {
      auto& l = e.xi_values.emplace_back();
      for (std::size_t k = 0; k < xis[s].size(); ++k) {
        l.push_back(xi_from_json(xis[s][k], path + ".xi_values[" + std::to_string(s) + "][" + std::to_string(k) + "]"));
      }
    }
    const Json& st = stages_of(j, path);
    for (std::size_t s = 0; s < st.size(); ++s) {
      auto& table = e.stages.emplace_back();
      for (std::size_t r = 0; r < st[s].size(); ++r) {
        const Json& row = st[s][r];
        const auto p = row_path(s, r);
        reject_unknown(row, p, {"x", "b", "xi", "z"});
        table[{get_as<int>(require(row, p, "x"), p + ".x"), get_as<int>(require(row, p, "b"), p + ".b"),
               get_as<int>(require(row, p, "xi"), p + ".xi")}] = get_as<int>(require(row, p, "z"), p + ".z");
      }
    }
    return e;
  }
  throw SchemaError(path + ".kind: unknown encoder kind \"" + kind + "\"");
}

inline Json policy_to_json(const EncoderPolicy& p) {
  if (p.deterministic()) return encoder_to_json(p.components.front().first);
  Json comps = Json::array();
  for (const auto& [e, w] : p.components) comps.push_back({{"weight", w}, {"encoder", encoder_to_json(e)}});
  return {{"kind", "mixture"}, {"components", comps}};
}

inline EncoderPolicy policy_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  if (j.is_object() && j.contains("kind") && j["kind"] == "mixture") {
    reject_unknown(j, path, {"kind", "components"});
    const Json& comps = require(j, path, "components");
    std::vector<std::pair<DeterministicEncoder, double>> mix;
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const auto p = path + ".components[" + std::to_string(k) + "]";
      reject_unknown(comps[k], p, {"weight", "encoder"});
      mix.emplace_back(encoder_from_json(require(comps[k], p, "encoder"), p + ".encoder"), get_as<double>(require(comps[k], p, "weight"), p + ".weight"));
    }
    return randomize_encoder(std::move(mix));
  }
  return encoder_from_json(j, path);
}

inline Json decoder_to_json(const Decoder& d) {
  if (d.kind == Decoder::Kind::tau) return {{"kind", "tau"}};
  Json stages = Json::array();
  for (const auto& st : d.stages) {
    Json rows = Json::array();
    for (const auto& [k, e] : st) rows.push_back({{"key", k}, {"estimate", e}});
    stages.push_back(rows);
  }
  return {{"kind", "table"}, {"default", d.default_estimate}, {"stages", stages}};
}

inline Decoder decoder_from_json(const Json& j, const std::string& path) {
  using namespace json_detail;
  const auto kind = get_as<std::string>(require(j, path, "kind"), path + ".kind");
  if (kind == "tau") {
    reject_unknown(j, path, {"kind"});
    return Decoder::tau();
  }
  if (kind != "table") throw SchemaError(path + ".kind: must be \"tau\" or \"table\"");
  reject_unknown(j, path, {"kind", "default", "stages"});
  Decoder d;
  d.kind = Decoder::Kind::table;
  if (j.contains("default")) d.default_estimate = get_as<int>(j["default"], path + ".default");
  const Json& st = stages_of(j, path);
  for (std::size_t s = 0; s < st.size(); ++s) {
    auto& table = d.stages.emplace_back();
    for (std::size_t r = 0; r < st[s].size(); ++r) {
      const auto p = path + ".stages[" + std::to_string(s) + "][" + std::to_string(r) + "]";
      reject_unknown(st[s][r], p, {"key", "estimate"});
      table[get_as<std::vector<int>>(require(st[s][r], p, "key"), p + ".key")] = get_as<int>(require(st[s][r], p, "estimate"), p + ".estimate");
    }
  }
  return d;
}

// Policies half of an assembly (everything except the instance).
inline Json assembly_policies_to_json(const Assembly& as) {
  Json encs = Json::array();
  for (const auto& e : as.encoders) encs.push_back(policy_to_json(e));
  Json out = {{"encoders", encs}, {"decoder", decoder_to_json(as.decoder)}};
  if (as.memory_rules) out["memory_rules"] = *as.memory_rules;
  return out;
}

inline Assembly assembly_from_json(const Instance& in, const Json& j) {
  using namespace json_detail;
  reject_unknown(j, "policy", {"encoders", "decoder", "memory_rules"});
  Assembly as;
  as.instance = in;
  const Json& encs = require(j, "policy", "encoders");
  if (!encs.is_array()) throw SchemaError("policy.encoders: expected an array");
  for (std::size_t k = 0; k < encs.size(); ++k) as.encoders.push_back(policy_from_json(encs[k], "policy.encoders[" + std::to_string(k) + "]"));
  as.decoder = j.contains("decoder") ? decoder_from_json(j["decoder"], "policy.decoder") : Decoder::tau();
  if (j.contains("memory_rules")) as.memory_rules = get_as<std::vector<std::vector<IntTable>>>(j["memory_rules"], "policy.memory_rules");
  return as;
}

inline Assembly load_assembly(const Instance& in, const std::string& path) { return assembly_from_json(in, read_json_file(path)); }

}  // namespace rtmt
