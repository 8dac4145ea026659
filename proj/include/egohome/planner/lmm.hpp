#pragma once

#include <memory>

#include "egohome/planner/matcher.hpp"

namespace egohome::planner {

// Optional external chat-completion backend (disabled by default; offline
// scripted matching needs no network). Endpoint and credential come from
// EGOHOME_LMM_ENDPOINT / EGOHOME_LMM_KEY / EGOHOME_LMM_MODEL.
struct LmmConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080
    std::string api_key;
    std::string model = "gpt-4v";
    int retries = 2;

    // Nullopt when the endpoint variable is unset.
    static std::optional<LmmConfig> from_env();
};

struct LmmTransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LmmAuthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LmmParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class LmmClient {
public:
    explicit LmmClient(const LmmConfig& cfg);
    ~LmmClient();

    // Instruction -> ordered subgoal texts.
    std::vector<std::string> decompose(const std::string& instruction);
    // Subgoal (text + optional image) and candidate images -> per-candidate
    // scores in [0,1], parsed from the model's ranked JSON answer.
    std::vector<real> score(const Subgoal& subgoal, const std::vector<Candidate>& cands);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Matcher backed by the endpoint with a scripted fallback after the retry
// budget; every fallback is counted and surfaced in the episode log.
class LmmMatcher : public GoalMatcher {
public:
    LmmMatcher(LmmClient* client, GoalMatcher* fallback) : client_(client), fallback_(fallback) {
        EGO_CHECK(client_ && fallback_, "LmmMatcher needs a client and a scripted fallback");
    }

    real score(const Candidate& cand, const Subgoal& subgoal) const override;
    std::vector<real> score_batch(const std::vector<Candidate>& cands,
                                  const Subgoal& subgoal) const override;

    mutable int fallback_count = 0;

private:
    LmmClient* client_;
    GoalMatcher* fallback_;
};

}  // namespace egohome::planner
