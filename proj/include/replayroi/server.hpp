#pragma once

#include "replayroi/project.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace replayroi {

inline constexpr std::string_view kApiPrefix = "/api/v1";

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    std::string token;
    std::optional<std::filesystem::path> assets;
    std::chrono::milliseconds tick{500};
};

// Estimate options from the project defaults plus string overrides, as used by
// both query parameters and CLI flags: mgt, accrual, mgt_cost, model, predictor,
// mode, horizon, seed, chains, warmup, draws, phi_prior, exclude_bug_time.
EstimateOptions estimate_options_with(const ProjectConfig& config,
                                      const std::map<std::string, std::string>& overrides);

// HTTP front end over one Project. Reads run concurrently against ledger
// snapshots; commands are serialized through a single writer lock.
class Server {
public:
    Server(Project& project, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds the socket and returns the port. Throws Error(PortInUse).
    int bind();
    void start(); // serve on a background thread
    void run();   // serve on the calling thread until stop()
    void stop();
    int port() const { return port_; }

    // Exposed for in-process callers and tests: executes one command as the
    // HTTP endpoint would. Returns (status, body).
    std::pair<int, nlohmann::json> command(const std::string& name, const nlohmann::json& body);

private:
    void routes();
    nlohmann::json run_command(const std::string& name, const nlohmann::json& body);
    std::shared_ptr<const ReportBundle> bundle_for(const std::map<std::string, std::string>& params);

    Project& project_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<bool> stopping_{false};

    mutable std::shared_mutex state_mutex_;
    std::map<std::string, std::pair<int, nlohmann::json>> completed_;
    std::mutex cache_mutex_;
    std::map<std::string, std::shared_ptr<const ReportBundle>> cache_;
};

} // namespace replayroi
