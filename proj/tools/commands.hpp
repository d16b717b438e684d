#pragma once

namespace rsyn::cli {

// Full command line; returns the process exit status.
int run(int argc, char** argv);

}  // namespace rsyn::cli
