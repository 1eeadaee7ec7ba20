#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "preflab/error.hpp"
#include "preflab/numerics.hpp"

namespace preflab {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_netspec_line(const NetSpec& spec) {
  std::string hidden;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    if (i) hidden += ',';
    hidden += std::to_string(spec.hidden[i]);
  }
  return "netspec input_dim=" + std::to_string(spec.input_dim) + " hidden=" + hidden +
         " slope=" + format_double(spec.slope) + " final_bias=" + (spec.final_bias ? "1" : "0");
}

NetSpec parse_netspec_line(const std::string& line) {
  std::istringstream in(line);
  std::string tag;
  in >> tag;
  if (tag != "netspec") throw InvalidInput("checkpoint: expected 'netspec' header");
  std::map<std::string, std::string> kv;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw InvalidInput("checkpoint: bad header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"input_dim", "hidden", "slope", "final_bias"}) {
    if (!kv.contains(key)) throw InvalidInput(std::string("checkpoint: missing ") + key);
  }
  NetSpec spec;
  try {
    spec.input_dim = std::stoul(kv["input_dim"]);
    spec.hidden = NetSpec::parse_arch(kv["hidden"]);
    spec.slope = std::stod(kv["slope"]);
  } catch (const InvalidInput&) {
    throw;
  } catch (const std::exception&) {
    throw InvalidInput("checkpoint: malformed netspec header");
  }
  spec.final_bias = kv["final_bias"] == "1";
  spec.validate();
  return spec;
}

void write_checkpoint(std::ostream& out, const NetSpec& spec, const NetParams& params) {
  check_params(spec, params);
  out << format_netspec_line(spec) << '\n';
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    out << 'W' << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols();
    for (double v : layer.weight.values()) out << ' ' << format_double(v);
    out << '\n';
    if (!layer.bias.empty()) {
      out << 'b' << l << ' ' << layer.bias.size();
      for (double v : layer.bias) out << ' ' << format_double(v);
      out << '\n';
    }
  }
}

namespace {

double parse_value(std::istringstream& in) {
  std::string tok;
  if (!(in >> tok)) throw InvalidInput("checkpoint: truncated tensor line");
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw InvalidInput("");
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("checkpoint: bad number '" + tok + "'");
  }
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("checkpoint: empty input");
  Checkpoint ck;
  ck.spec = parse_netspec_line(line);
  ck.params = zero_params(ck.spec);
  for (std::size_t l = 0; l < ck.params.layers.size(); ++l) {
    auto& layer = ck.params.layers[l];
    if (!std::getline(in, line)) throw InvalidInput("checkpoint: missing W" + std::to_string(l));
    std::istringstream wl(line);
    std::string tag;
    std::size_t rows = 0, cols = 0;
    wl >> tag >> rows >> cols;
    if (tag != "W" + std::to_string(l) || rows != layer.weight.rows() ||
        cols != layer.weight.cols()) {
      throw InvalidInput("checkpoint: bad tensor header '" + tag + "'");
    }
    for (double& v : layer.weight.values()) v = parse_value(wl);
    if (!layer.bias.empty()) {
      if (!std::getline(in, line)) throw InvalidInput("checkpoint: missing b" + std::to_string(l));
      std::istringstream bl(line);
      std::size_t n = 0;
      bl >> tag >> n;
      if (tag != "b" + std::to_string(l) || n != layer.bias.size()) {
        throw InvalidInput("checkpoint: bad tensor header '" + tag + "'");
      }
      for (double& v : layer.bias) v = parse_value(bl);
    }
  }
  check_params(ck.spec, ck.params);
  return ck;
}

}  // namespace preflab
