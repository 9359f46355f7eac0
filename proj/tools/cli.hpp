#pragma once

#include <iosfwd>

namespace npmle::cli {

// Exit codes: 0 success, 1 usage or input error, 2 numerical failure
// (non-certified fit, quadrature or solver non-convergence).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npmle::cli
