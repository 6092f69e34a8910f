#pragma once

namespace caai::cli {

/// Entry point behind the caai binary. Exit codes: 0 success, 1 validation
/// error (bad flags, bad config, missing inputs), 2 runtime failure.
int run(int argc, const char* const* argv);

}  // namespace caai::cli
