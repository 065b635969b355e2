#pragma once

// Command-line front end. run_cli parses the argument list, dispatches to
// the pipeline, and returns the process exit status: 0 on success, 1 on a
// domain error (rendered on err as "Name: detail"), 2 on a usage error.
// Streams are injected so tests can drive it end to end.

#include <iosfwd>
#include <string>
#include <vector>

namespace dmtag {

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace dmtag
