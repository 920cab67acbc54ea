#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fq::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kConstraint = 3 };

/// Runs one fqtool invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// "256,320,384" or "256:512:64" (inclusive range), mixed freely.
std::vector<int> parse_int_list(const std::string& text);
/// Comma-separated reals, each a decimal or a fraction such as "1/16".
std::vector<double> parse_real_list(const std::string& text);
double parse_real(const std::string& text);

}  // namespace fq::cli
