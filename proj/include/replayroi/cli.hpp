#pragma once

#include "replayroi/config.hpp"
#include "replayroi/error.hpp"
#include "replayroi/project.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace replayroi::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kInternalError = 2, kBlocked = 3 };

int exit_code_for(ErrorKind kind);

struct Environment {
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
    EnvLookup env = process_env;
    ProjectDeps deps; // test seams; empty means real git, shell and clock
};

// args excludes the program name.
int run(const std::vector<std::string>& args, const Environment& environment);
int run(int argc, char** argv);

// Every command and flag, as printed by `replayroi help`.
std::string help_text();

// "90s", "12m", "1.5h", "01:02:03", or a bare number of minutes -> whole seconds.
std::int64_t parse_effort(std::string_view text);

} // namespace replayroi::cli
