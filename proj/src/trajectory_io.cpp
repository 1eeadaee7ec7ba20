#include <istream>
#include <ostream>

#include <json.hpp>

#include "preflab/datagen.hpp"
#include "preflab/error.hpp"

namespace preflab {

namespace {

void append_array(std::string& out, std::span<const double> v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  out += ']';
}

std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

Vec64 to_vec(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw InvalidInput(std::string("trajectory store: '") + what + "' not an array");
  Vec64 v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw InvalidInput(std::string("trajectory store: bad number in ") + what);
    v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace

std::string trajectory_line(const Trajectory& traj) {
  std::string out;
  out.reserve(traj.steps.size() * 400);
  out += "{\"id\":" + std::to_string(traj.id);
  out += ",\"env\":" + json_escape(to_string(traj.env));
  out += ",\"source\":" + json_escape(traj.source);
  out += ",\"return\":" + format_double(traj.ret);
  out += ",\"success\":";
  out += traj.success ? (*traj.success ? "true" : "false") : "null";
  out += ",\"steps\":[";
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& s = traj.steps[t];
    if (t) out += ',';
    out += "{\"raw\":";
    append_array(out, s.raw);
    out += ",\"priv\":";
    append_array(out, s.priv);
    out += ",\"a\":";
    append_array(out, s.action);
    out += ",\"r\":" + format_double(s.reward) + "}";
  }
  out += "]}";
  return out;
}

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs) {
  for (const auto& t : trajs) out << trajectory_line(t) << '\n';
  if (!out) throw IoError("failed writing trajectory store");
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<Trajectory> trajs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("trajectory store line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Trajectory t;
      t.id = j.at("id").get<int>();
      t.env = parse_env(j.at("env").get<std::string>());
      t.source = j.at("source").get<std::string>();
      t.ret = j.at("return").get<double>();
      const auto& succ = j.at("success");
      if (!succ.is_null()) t.success = succ.get<bool>();
      for (const auto& s : j.at("steps")) {
        t.steps.push_back({to_vec(s.at("raw"), "raw"), to_vec(s.at("priv"), "priv"),
                           to_vec(s.at("a"), "a"), s.at("r").get<double>()});
      }
      trajs.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("trajectory store line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trajs;
}

}  // namespace preflab
