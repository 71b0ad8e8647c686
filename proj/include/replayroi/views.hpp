#pragma once

// JSON renderings shared by `--json` CLI output and the HTTP API.

#include "replayroi/session.hpp"

#include <json.hpp>

namespace replayroi {

nlohmann::json status_json(const SessionState& state, const Clock& clock,
                           const std::vector<std::string>& missing_baseline);
nlohmann::json timer_json(const ActiveTimer& timer, const Clock& clock);
nlohmann::json to_json_view(const ActivityRecord& r);
nlohmann::json to_json_view(const TestRunRecord& r);
nlohmann::json to_json_view(const BugRecord& r);
nlohmann::json to_json_view(const RequiredActions& r);
nlohmann::json to_json_view(const StopResult& r);
nlohmann::json to_json_view(const BuildResult& r);

} // namespace replayroi
