#include "replayroi/views.hpp"

namespace replayroi {

using nlohmann::json;

json timer_json(const ActiveTimer& timer, const Clock& clock) {
    const double elapsed = static_cast<double>(std::max<std::int64_t>(0, clock.monotonic() - timer.monotonic_ns)) / 1e9;
    return {{"id", timer.id},
            {"category", to_string(timer.category)},
            {"protocol", timer.protocol},
            {"framework", timer.framework},
            {"version", timer.version},
            {"started_at", format_instant(timer.started_at)},
            {"elapsed_s", elapsed}};
}

json status_json(const SessionState& state, const Clock& clock, const std::vector<std::string>& missing_baseline) {
    json tests = json::array();
    for (const auto& t : state.tests) {
        json entry{{"protocol", t.protocol}, {"framework", t.framework}};
        const auto it = state.status.find({t.protocol, t.framework});
        if (it != state.status.end()) {
            const auto& st = it->second;
            entry["attempts"] = st.attempts;
            entry["latest"] = st.latest ? json(to_string(*st.latest)) : json(nullptr);
            entry["awaiting_classification"] = st.awaiting_classification;
            entry["classification"] = st.classification ? json(to_string(*st.classification)) : json(nullptr);
            entry["bug_record_pending"] = st.bug_record_pending;
            entry["script_update_pending"] = st.script_update_pending;
            entry["crash_rerun_pending"] = st.crash_rerun_pending;
        } else {
            entry["attempts"] = 0;
            entry["latest"] = nullptr;
        }
        tests.push_back(std::move(entry));
    }
    json j{{"phase", to_string(state.phase)},
           {"session_id", state.session_id},
           {"version", state.version},
           {"versions", state.versions ? state.versions->size() : 0},
           {"checked_out", state.checked_out},
           {"build_ok", state.build_ok ? json(*state.build_ok) : json(nullptr)},
           {"tests", tests},
           {"cursor", state.cursor()},
           {"timer", state.timer ? timer_json(*state.timer, clock) : json(nullptr)},
           {"blocking", state.blocking_reasons()},
           {"missing_baseline", missing_baseline},
           {"last_sequence", state.last_sequence}};
    if (state.versions && state.version >= 1 && state.version <= state.versions->size()) {
        j["current"] = state.versions->at(state.version);
    }
    return j;
}

json to_json_view(const ActivityRecord& r) {
    return {{"id", r.id},
            {"version", r.version},
            {"protocol", r.protocol},
            {"framework", r.framework},
            {"category", to_string(r.category)},
            {"started_at", format_instant(r.started_at)},
            {"stopped_at", format_instant(r.stopped_at)},
            {"duration_s", r.duration_s},
            {"overridden", r.overridden},
            {"note", r.note}};
}

json to_json_view(const TestRunRecord& r) {
    return {{"version", r.version},
            {"protocol", r.protocol},
            {"framework", r.framework},
            {"outcome", to_string(r.outcome)},
            {"attempt", r.attempt},
            {"elapsed_ms", r.elapsed_ms}};
}

json to_json_view(const BugRecord& r) {
    return {{"version", r.version},
            {"protocol", r.protocol},
            {"framework", r.framework},
            {"description", r.description},
            {"resolution", to_string(r.resolution)},
            {"activity_id", r.activity_id}};
}

json to_json_view(const RequiredActions& r) {
    json cats = json::array();
    for (auto c : r.activities) cats.push_back(to_string(c));
    return {{"activities", cats},
            {"bug_record", r.bug_record},
            {"script_update", r.script_update},
            {"rerun", r.rerun},
            {"automatic_rerun", r.automatic_rerun}};
}

json to_json_view(const StopResult& r) {
    return {{"activity", to_json_view(r.record)},
            {"bug", r.bug ? to_json_view(*r.bug) : json(nullptr)},
            {"script_updated", r.script_updated},
            {"rerun", r.rerun ? to_json_view(*r.rerun) : json(nullptr)}};
}

json to_json_view(const BuildResult& r) {
    return {{"ok", r.ok}, {"exit_code", r.exit_code}, {"timed_out", r.timed_out}, {"log_excerpt", r.log_excerpt}};
}

} // namespace replayroi
