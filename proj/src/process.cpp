#include "replayroi/process.hpp"

#include "replayroi/error.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

namespace replayroi {

namespace chr = std::chrono;

namespace {

struct Pipe {
    int fds[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fds, O_CLOEXEC) != 0) {
            throw Error(ErrorKind::Internal, fmt::format("pipe: {}", std::strerror(errno)));
        }
    }
    ~Pipe() {
        for (int fd : fds) {
            if (fd >= 0) ::close(fd);
        }
    }
    void close_end(int i) {
        if (fds[i] >= 0) ::close(fds[i]);
        fds[i] = -1;
    }
};

} // namespace

ProcessResult ShellRunner::run(const CommandSpec& spec, const std::filesystem::path& cwd) {
    Pipe out;
    const auto started = chr::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw Error(ErrorKind::Internal, fmt::format("fork: {}", std::strerror(errno)));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out.fds[1], STDOUT_FILENO);
        ::dup2(out.fds[1], STDERR_FILENO);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
            const auto msg = fmt::format("cannot enter {}: {}\n", cwd.string(), std::strerror(errno));
            (void)!::write(STDERR_FILENO, msg.data(), msg.size());
            ::_exit(kShellNotFound);
        }
        ::execl("/bin/sh", "sh", "-c", spec.command.c_str(), static_cast<char*>(nullptr));
        ::_exit(kShellNotFound);
    }
    ::setpgid(pid, pid);
    out.close_end(1);

    ProcessResult result;
    const auto deadline = started + spec.timeout;
    char buf[4096];
    bool open = true;
    while (open) {
        const auto remaining = chr::duration_cast<chr::milliseconds>(deadline - chr::steady_clock::now());
        if (remaining.count() <= 0) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }
        pollfd pfd{out.fds[0], POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;
        const ssize_t n = ::read(out.fds[0], buf, sizeof buf);
        if (n > 0) {
            result.output.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
            open = false;
        }
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Background grandchildren may still hold the group; reap them with the leader.
    ::kill(-pid, SIGKILL);
    result.elapsed = chr::duration_cast<chr::milliseconds>(chr::steady_clock::now() - started);
    if (result.timed_out) {
        result.exit_code = -1;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

std::string tail_excerpt(const std::string& log, std::size_t max_bytes) {
    if (log.size() <= max_bytes) return log;
    std::size_t start = log.size() - max_bytes;
    const auto nl = log.find('\n', start);
    if (nl != std::string::npos && nl + 1 < log.size()) start = nl + 1;
    return log.substr(start);
}

} // namespace replayroi
