#pragma once

#include <iosfwd>

namespace taylorglo {

/// Entry point for the `taylorglo` command line. Exit codes: 0 success,
/// 1 runtime failure (one-line diagnostic on `err`), 2 usage error.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace taylorglo
