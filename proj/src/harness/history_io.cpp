#include "boed/harness/history_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "boed/errors.hpp"

namespace boed::harness {

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

double number(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("not a number: '" + tok + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + tok + "'", line);
  return v;
}

}  // namespace

env::History read_history(std::istream& in, const env::LikelihoodModel& env) {
  env::History h = env.empty_history();
  const std::size_t nd = env.design_space().dim(), ny = env.outcome_dim();
  bool header = false;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto tok = tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (!header) {
      std::string name = tok.back();
      if (tok.size() == 1 && name.rfind("env=", 0) == 0) name = name.substr(4);
      const bool ok = (tok.size() == 1) || (tok.size() == 2 && tok[0] == "env");
      if (!ok || name.empty()) throw ParseError("expected a header naming the environment", no);
      if (name != env.name()) throw ParseError("history is for '" + name + "', not '" + env.name() + "'", no);
      header = true;
      continue;
    }
    if (tok.size() != nd + ny) {
      throw ParseError("expected " + std::to_string(nd) + " design and " + std::to_string(ny) +
                           " outcome values, got " + std::to_string(tok.size()),
                       no);
    }
    std::vector<double> d(nd), y(ny);
    for (std::size_t i = 0; i < nd; ++i) d[i] = number(tok[i], no);
    for (std::size_t i = 0; i < ny; ++i) y[i] = number(tok[nd + i], no);
    if (!env.design_space().contains(d)) throw ParseError("design outside the design space", no);
    h.push(d, y);
  }
  if (!header) throw ParseError("missing environment header", 1);
  return h;
}

env::History read_history_file(const std::string& path, const env::LikelihoodModel& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open history file '" + path + "'");
  return read_history(in, env);
}

void write_history(std::ostream& out, const env::LikelihoodModel& env, const env::History& h) {
  out << "env " << env.name() << "\n" << std::setprecision(17);
  for (std::size_t t = 0; t < h.size(); ++t) {
    const char* sep = "";
    for (double v : h.design(t)) {
      out << sep << v;
      sep = " ";
    }
    for (double v : h.outcome(t)) out << " " << v;
    out << "\n";
  }
}

}  // namespace boed::harness
