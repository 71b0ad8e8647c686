#pragma once

#include <chrono>
#include <filesystem>
#include <string>

namespace replayroi {

// A user-configured shell command. Run through /bin/sh -c so users can write
// pipelines and redirections exactly as in a terminal.
struct CommandSpec {
    std::string command;
    std::chrono::seconds timeout{std::chrono::minutes{30}};
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string output; // combined stdout and stderr
    std::chrono::milliseconds elapsed{0};

    bool ok() const { return !timed_out && exit_code == 0; }
};

// Exit status 127 from the shell is how "command not found" surfaces.
inline constexpr int kShellNotFound = 127;

class CommandRunner {
public:
    virtual ~CommandRunner() = default;
    virtual ProcessResult run(const CommandSpec& spec, const std::filesystem::path& cwd) = 0;
};

class ShellRunner final : public CommandRunner {
public:
    ProcessResult run(const CommandSpec& spec, const std::filesystem::path& cwd) override;
};

// Last `max_bytes` of a log, trimmed to a line boundary where possible.
std::string tail_excerpt(const std::string& log, std::size_t max_bytes = 4096);

} // namespace replayroi
