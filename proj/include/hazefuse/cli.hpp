#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hazefuse {

// Runs the hazefuse command line in-process. args excludes the program name.
// Errors are reported as one `<kind>: <message>` line on err; the return
// value is the process exit code (0 ok, 1 runtime error, 2 usage error).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hazefuse
