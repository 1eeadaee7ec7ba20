#include <map>
#include <sstream>

#include "preflab/envs.hpp"
#include "preflab/error.hpp"

namespace preflab {

EnvConfig EnvConfig::defaults(EnvId env) {
  EnvConfig c;
  c.env = env;
  switch (env) {
    case EnvId::reacher:
      c.horizon = 50;
      c.max_speed = 0.5;
      break;
    case EnvId::feeding:
    case EnvId::itch:
      c.horizon = 100;
      c.max_speed = 0.05;
      break;
  }
  return c;
}

void EnvConfig::validate() const {
  if (horizon < 1) throw InvalidInput("env config: horizon must be >= 1");
  for (double v : {action_bound, max_speed, contact_stiffness, spill_speed, feed_radius,
                   feed_speed, itch_radius, itch_success_force}) {
    if (!(v > 0.0)) throw InvalidInput("env config: radii, speeds and thresholds must be > 0");
  }
  if (feed_success_particles < 1 || feed_success_particles > kNumParticles) {
    throw InvalidInput("env config: feed_success_particles must be in [1, 5]");
  }
}

std::string EnvConfig::to_text() const {
  std::ostringstream out;
  out << "env=" << to_string(env) << " horizon=" << horizon
      << " action_bound=" << format_double(action_bound)
      << " max_speed=" << format_double(max_speed)
      << " stiffness=" << format_double(contact_stiffness)
      << " spill_speed=" << format_double(spill_speed)
      << " feed_radius=" << format_double(feed_radius)
      << " feed_speed=" << format_double(feed_speed)
      << " itch_radius=" << format_double(itch_radius)
      << " feed_success_particles=" << feed_success_particles
      << " itch_success_force=" << format_double(itch_success_force) << " seed=" << seed;
  return out.str();
}

EnvConfig EnvConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (tok.starts_with('#')) {
      std::getline(in, tok);
      continue;
    }
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidInput("env config: expected key=value, got '" + tok + "'");
    }
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (!kv.contains("env")) throw InvalidInput("env config: missing env=");
  EnvConfig c = defaults(parse_env(kv["env"]));
  kv.erase("env");
  for (const auto& [key, value] : kv) {
    try {
      if (key == "horizon") c.horizon = std::stoi(value);
      else if (key == "action_bound") c.action_bound = std::stod(value);
      else if (key == "max_speed") c.max_speed = std::stod(value);
      else if (key == "stiffness") c.contact_stiffness = std::stod(value);
      else if (key == "spill_speed") c.spill_speed = std::stod(value);
      else if (key == "feed_radius") c.feed_radius = std::stod(value);
      else if (key == "feed_speed") c.feed_speed = std::stod(value);
      else if (key == "itch_radius") c.itch_radius = std::stod(value);
      else if (key == "feed_success_particles") c.feed_success_particles = std::stoi(value);
      else if (key == "itch_success_force") c.itch_success_force = std::stod(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else throw InvalidInput("env config: unknown key '" + key + "'");
    } catch (const InvalidInput&) {
      throw;
    } catch (const std::exception&) {
      throw InvalidInput("env config: bad value for '" + key + "': '" + value + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace preflab
