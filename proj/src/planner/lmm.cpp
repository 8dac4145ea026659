#include "egohome/planner/lmm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>

#include "egohome/core/io.hpp"
#include "egohome/nn/image_bridge.hpp"

namespace egohome::planner {

using nlohmann::json;

std::optional<LmmConfig> LmmConfig::from_env() {
    const char* endpoint = std::getenv("EGOHOME_LMM_ENDPOINT");
    if (!endpoint || !*endpoint) return std::nullopt;
    LmmConfig cfg;
    cfg.endpoint = endpoint;
    if (const char* key = std::getenv("EGOHOME_LMM_KEY")) cfg.api_key = key;
    if (const char* model = std::getenv("EGOHOME_LMM_MODEL")) cfg.model = model;
    return cfg;
}

struct LmmClient::Impl {
    LmmConfig cfg;
    httplib::Client http;

    explicit Impl(const LmmConfig& c) : cfg(c), http(c.endpoint) { http.set_read_timeout(30, 0); }

    json chat(const json& messages) {
        json body;
        body["model"] = cfg.model;
        body["messages"] = messages;
        httplib::Headers headers;
        if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
            auto res = http.Post("/v1/chat/completions", headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport failure (no response)";
                continue;
            }
            if (res->status == 401 || res->status == 403)
                throw LmmAuthError(strf("lmm endpoint rejected credentials (HTTP %d)", res->status));
            if (res->status != 200) {
                last_error = strf("HTTP %d", res->status);
                continue;
            }
            try {
                return json::parse(res->body);
            } catch (const std::exception& e) {
                throw LmmParseError(strf("lmm response is not JSON: %s", e.what()));
            }
        }
        throw LmmTransportError("lmm endpoint unreachable after " + std::to_string(cfg.retries + 1) +
                                " attempts: " + last_error);
    }

    static std::string content_of(const json& reply) {
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw LmmParseError(strf("malformed chat reply: %s", e.what()));
        }
    }

    // The model is asked to answer with a JSON object; tolerate prose around it.
    static json embedded_json(const std::string& content) {
        const size_t start = content.find('{');
        const size_t end = content.rfind('}');
        if (start == std::string::npos || end == std::string::npos || end < start)
            throw LmmParseError("no JSON object in the model answer: " + content);
        try {
            return json::parse(content.substr(start, end - start + 1));
        } catch (const std::exception& e) {
            throw LmmParseError(strf("unparseable JSON in the model answer: %s", e.what()));
        }
    }
};

LmmClient::LmmClient(const LmmConfig& cfg) {
    EGO_CONFIG_CHECK(!cfg.endpoint.empty(),
                     "lmm backend requires EGOHOME_LMM_ENDPOINT; the offline scripted matcher is the "
                     "default and needs no endpoint");
    impl_ = std::make_unique<Impl>(cfg);
}

LmmClient::~LmmClient() = default;

std::vector<std::string> LmmClient::decompose(const std::string& instruction) {
    json content = json::array();
    content.push_back({{"type", "text"},
                       {"text",
                        "Decompose the household instruction into short ordered subgoals. Answer "
                        "with JSON only: {\"subgoals\": [\"...\"]}.\nInstruction: " +
                            instruction}});
    json messages = json::array({{{"role", "user"}, {"content", content}}});
    const json reply = impl_->chat(messages);
    const json parsed = Impl::embedded_json(Impl::content_of(reply));
    if (!parsed.contains("subgoals") || !parsed["subgoals"].is_array() || parsed["subgoals"].empty())
        throw LmmParseError("decompose answer lacks a subgoals array");
    std::vector<std::string> out;
    for (const auto& s : parsed["subgoals"]) out.push_back(s.get<std::string>());
    return out;
}

std::vector<real> LmmClient::score(const Subgoal& subgoal, const std::vector<Candidate>& cands) {
    EGO_CHECK(!cands.empty(), "lmm score: no candidates");
    json content = json::array();
    std::string prompt =
        "You compare imagined outcomes of candidate actions against a subgoal. Subgoal: \"" +
        subgoal.text +
        "\". The first attached image (if any) depicts the subgoal; the following images are the "
        "candidate outcomes in order. Answer with JSON only: {\"scores\": [s0, s1, ...]} where each "
        "score is in [0,1] and higher means closer to the subgoal.";
    content.push_back({{"type", "text"}, {"text", prompt}});
    auto push_image = [&](const nn::Tensor& t) {
        const std::string b64 = base64_encode(encode_png(nn::image_from_tensor(t)));
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + b64}}}});
    };
    if (subgoal.image) push_image(*subgoal.image);
    for (const auto& c : cands) push_image(c.image);

    json messages = json::array({{{"role", "user"}, {"content", content}}});
    const json reply = impl_->chat(messages);
    const json parsed = Impl::embedded_json(Impl::content_of(reply));
    if (!parsed.contains("scores") || !parsed["scores"].is_array() ||
        parsed["scores"].size() != cands.size())
        throw LmmParseError(strf("score answer must hold %zu scores", cands.size()));
    std::vector<real> out;
    for (const auto& s : parsed["scores"]) {
        EGO_CHECK(s.is_number(), "lmm score: non-numeric entry");
        out.push_back(std::clamp<real>(s.get<real>(), 0.0, 1.0));
    }
    return out;
}

real LmmMatcher::score(const Candidate& cand, const Subgoal& subgoal) const {
    return score_batch({cand}, subgoal)[0];
}

std::vector<real> LmmMatcher::score_batch(const std::vector<Candidate>& cands,
                                          const Subgoal& subgoal) const {
    try {
        return client_->score(subgoal, cands);
    } catch (const std::exception&) {
        ++fallback_count;
        return fallback_->score_batch(cands, subgoal);
    }
}

}  // namespace egohome::planner
