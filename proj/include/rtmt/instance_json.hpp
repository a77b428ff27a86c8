#pragma once

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rtmt/errors.hpp"
#include "rtmt/model.hpp"

namespace rtmt {

using Json = nlohmann::json;

namespace json_detail {

inline void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw SchemaError(path + "." + it.key() + ": unknown field");
  }
}

inline const Json& require(const Json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key + ": missing field");
  return *it;
}

template <typename T>
T get_as(const Json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": wrong type (" + e.what() + ")");
  }
}

}  // namespace json_detail

inline Json to_json(const Instance& in) {
  Json al = {{"n_encoders", in.alphabets.n_encoders},
             {"x_sizes", in.alphabets.x_sizes},
             {"a_size", in.alphabets.a_size},
             {"z_sizes", in.alphabets.z_sizes},
             {"y_sizes", in.alphabets.y_sizes},
             {"horizon", in.alphabets.horizon}};
  if (!in.alphabets.m_sizes.empty()) al["m_sizes"] = in.alphabets.m_sizes;
  Json ch = {{"matrix", in.channels.matrix}};
  if (!in.channels.noiseless.empty()) {
    Json flags = Json::array();
    for (bool b : in.channels.noiseless) flags.push_back(b);
    ch["noiseless"] = flags;
  }
  Json rc = {{"mode", in.receiver.mode == MemoryMode::perfect ? "perfect" : "finite"}};
  if (in.receiver.mode == MemoryMode::finite) rc["memory_rules"] = in.receiver.memory_rules;
  return Json{{"alphabets", al},
              {"source", {{"a_prior", in.source.a_prior}, {"init", in.source.init}, {"kernel", in.source.kernel}}},
              {"channels", ch},
              {"receiver", rc},
              {"distortion", {{"estimate_size", in.distortion.estimate_size}, {"rho", in.distortion.rho}}}};
}

// Parses the instance document. Shape errors throw SchemaError; semantic
// checks are left to validate(). A noiseless encoder may give an empty
// channel list, which is filled with the identity.
inline Instance instance_from_json(const Json& j) {
  using namespace json_detail;
  reject_unknown(j, "instance", {"alphabets", "source", "channels", "receiver", "distortion"});
  Instance in;

  const Json& al = require(j, "instance", "alphabets");
  reject_unknown(al, "alphabets", {"n_encoders", "x_sizes", "a_size", "z_sizes", "y_sizes", "m_sizes", "horizon"});
  in.alphabets.n_encoders = get_as<int>(require(al, "alphabets", "n_encoders"), "alphabets.n_encoders");
  in.alphabets.x_sizes = get_as<std::vector<int>>(require(al, "alphabets", "x_sizes"), "alphabets.x_sizes");
  in.alphabets.a_size = get_as<int>(require(al, "alphabets", "a_size"), "alphabets.a_size");
  in.alphabets.z_sizes = get_as<std::vector<int>>(require(al, "alphabets", "z_sizes"), "alphabets.z_sizes");
  if (al.contains("y_sizes")) {
    in.alphabets.y_sizes = get_as<std::vector<int>>(al["y_sizes"], "alphabets.y_sizes");
  } else {
    in.alphabets.y_sizes = in.alphabets.z_sizes;
  }
  if (al.contains("m_sizes")) in.alphabets.m_sizes = get_as<std::vector<int>>(al["m_sizes"], "alphabets.m_sizes");
  in.alphabets.horizon = get_as<int>(require(al, "alphabets", "horizon"), "alphabets.horizon");

  const Json& src = require(j, "instance", "source");
  reject_unknown(src, "source", {"a_prior", "init", "kernel"});
  in.source.a_prior = get_as<Row>(require(src, "source", "a_prior"), "source.a_prior");
  in.source.init = get_as<std::vector<Matrix>>(require(src, "source", "init"), "source.init");
  in.source.kernel = get_as<std::vector<std::vector<std::vector<Matrix>>>>(require(src, "source", "kernel"), "source.kernel");

  const Json& ch = require(j, "instance", "channels");
  reject_unknown(ch, "channels", {"matrix", "noiseless"});
  if (ch.contains("noiseless")) in.channels.noiseless = get_as<std::vector<bool>>(ch["noiseless"], "channels.noiseless");
  if (ch.contains("matrix")) {
    in.channels.matrix = get_as<std::vector<std::vector<Matrix>>>(ch["matrix"], "channels.matrix");
  }
  const auto n = static_cast<std::size_t>(std::max(in.alphabets.n_encoders, 0));
  if (in.channels.matrix.empty() && !in.channels.noiseless.empty()) in.channels.matrix.resize(n);
  for (std::size_t i = 0; i < in.channels.matrix.size(); ++i) {
    const bool flagged = i < in.channels.noiseless.size() && in.channels.noiseless[i];
    if (flagged && in.channels.matrix[i].empty() && i < in.alphabets.z_sizes.size()) {
      in.channels.matrix[i].push_back(identity_matrix(in.alphabets.z_sizes[i]));
    }
  }

  const Json& rc = require(j, "instance", "receiver");
  reject_unknown(rc, "receiver", {"mode", "memory_rules"});
  const auto mode = get_as<std::string>(require(rc, "receiver", "mode"), "receiver.mode");
  if (mode == "finite") {
    in.receiver.mode = MemoryMode::finite;
  } else if (mode == "perfect") {
    in.receiver.mode = MemoryMode::perfect;
  } else {
    throw SchemaError("receiver.mode: expected \"finite\" or \"perfect\", got \"" + mode + "\"");
  }
  if (rc.contains("memory_rules")) {
    in.receiver.memory_rules = get_as<std::vector<std::vector<IntTable>>>(rc["memory_rules"], "receiver.memory_rules");
  }

  const Json& d = require(j, "instance", "distortion");
  reject_unknown(d, "distortion", {"estimate_size", "rho"});
  in.distortion.estimate_size = get_as<int>(require(d, "distortion", "estimate_size"), "distortion.estimate_size");
  in.distortion.rho = get_as<std::vector<Matrix>>(require(d, "distortion", "rho"), "distortion.rho");
  return in;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw SchemaError(path + ": cannot open file");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline Instance load_instance(const std::string& path) { return instance_from_json(read_json_file(path)); }

// 64-bit FNV-1a over the canonical (sorted-key, compact) serialization.
inline std::uint64_t content_hash(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace rtmt
