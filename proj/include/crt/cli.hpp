#pragma once

namespace crt {

// Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
int cli_main(int argc, const char* const* argv);

}  // namespace crt
