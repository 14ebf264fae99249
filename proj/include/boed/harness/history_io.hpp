#pragma once

#include <iosfwd>
#include <string>

#include "boed/env/model.hpp"

namespace boed::harness {

// Text format: a header line naming the environment ("source", "env source"
// or "env=source"), then one experiment per line with the design components
// followed by the outcome components, whitespace-separated. Blank lines and
// lines starting with '#' are skipped. Errors are ParseError with the line number.
env::History read_history(std::istream& in, const env::LikelihoodModel& env);
env::History read_history_file(const std::string& path, const env::LikelihoodModel& env);
void write_history(std::ostream& out, const env::LikelihoodModel& env, const env::History& h);

}  // namespace boed::harness
