#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace modnet {

// Runs one command line (without the program name). Returns 0 on success,
// 2 on usage errors and 1 when a module fails. Successful and failed runs
// with a known output directory leave a manifest.json there.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace modnet
