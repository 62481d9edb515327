// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include "knowagent/policy.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"
#include "knowagent/trajectory.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

namespace knowagent
{

namespace
{

class ScriptedSession final : public PolicySession
{
public:
    ScriptedSession(std::string taskId, const std::vector<std::string>* outputs):
        _taskId(std::move(taskId)), _outputs(outputs)
    {
    }

    std::string generate(const std::string&, std::span<const std::string>, const Sampling&) override
    {
        if (!_outputs || _cursor >= _outputs->size())
            throw PolicyExhausted("scripted policy has no more outputs for task '" + _taskId + "'");
        return (*_outputs)[_cursor++];
    }

private:
    std::string _taskId;
    const std::vector<std::string>* _outputs;
    size_t _cursor = 0;
};

class HttpSession final : public PolicySession
{
public:
    explicit HttpSession(const HttpPolicy& policy): _policy(policy) {}

    std::string generate(const std::string& prompt, std::span<const std::string> stop, const Sampling& sampling) override
    {
        return _policy.complete(prompt, stop, sampling);
    }

private:
    const HttpPolicy& _policy;
};

struct ParsedUrl
{
    std::string origin; // scheme://host[:port]
    std::string path;   // full request path for chat completions
};

ParsedUrl parse_base_url(const std::string& url)
{
    auto schemeEnd = url.find("://");
    if (schemeEnd == std::string::npos)
        throw Error(ErrorCode::Usage, "policy URL must start with http:// or https://: " + url);
    auto pathStart = url.find('/', schemeEnd + 3);
    auto origin = pathStart == std::string::npos ? url : url.substr(0, pathStart);
    auto path = pathStart == std::string::npos ? std::string {} : url.substr(pathStart);
    while (!path.empty() && path.back() == '/')
        path.pop_back();
    constexpr std::string_view suffix = "/chat/completions";
    if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0)
        path += suffix;
    return {origin, path};
}

std::string env_or(const char* name, std::string fallback)
{
    const char* value = std::getenv(name);
    return value && *value ? std::string(value) : std::move(fallback);
}

} // namespace

// --- scripted ---------------------------------------------------------------------------

ScriptedPolicy::ScriptedPolicy(std::string identifier, std::map<std::string, std::vector<std::string>> episodes):
    _identifier(std::move(identifier)), _episodes(std::move(episodes))
{
}

std::shared_ptr<ScriptedPolicy> ScriptedPolicy::load(const std::string& path)
{
    auto doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("episodes") || !doc["episodes"].is_object())
        throw Error(ErrorCode::MalformedDocument, path + ": scripted policy needs an 'episodes' object");
    auto episodes = std::map<std::string, std::vector<std::string>> {};
    try
    {
        for (const auto& [taskId, outputs]: doc["episodes"].items())
            episodes[taskId] = outputs.get<std::vector<std::string>>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorCode::MalformedDocument, path + ": " + e.what());
    }
    return std::make_shared<ScriptedPolicy>("scripted:" + path, std::move(episodes));
}

std::shared_ptr<ScriptedPolicy> ScriptedPolicy::from_gold(std::span<const Scenario> scenarios, const ActionKnowledge& kb,
                                                          std::string identifier)
{
    auto episodes = std::map<std::string, std::vector<std::string>> {};
    for (const auto& scenario: scenarios)
    {
        auto traj = Trajectory {};
        auto& outputs = episodes[scenario.task_id];
        for (const auto& line: scenario.gold_script)
        {
            auto parsed = parse_action(line, kb);
            if (auto* failure = std::get_if<ParseFailure>(&parsed))
                throw Error(ErrorCode::MalformedDocument,
                            "gold script of '" + scenario.task_id + "' has an unparsable action: " + failure->detail);
            auto step = Step {};
            step.index = traj.steps.size();
            step.action_path = canonical_path(traj, step.index);
            step.action = std::get<ActionInvocation>(std::move(parsed));
            step.thought = "Next I will " + format_action(step.action, kb) + ".";
            outputs.push_back(format_step_output(step, kb));
            traj.steps.push_back(std::move(step));
        }
    }
    return std::make_shared<ScriptedPolicy>(std::move(identifier), std::move(episodes));
}

std::unique_ptr<PolicySession> ScriptedPolicy::open(std::string_view task_id) const
{
    auto it = _episodes.find(std::string(task_id));
    return std::make_unique<ScriptedSession>(std::string(task_id), it == _episodes.end() ? nullptr : &it->second);
}

Json ScriptedPolicy::to_json() const
{
    auto episodes = Json::object();
    for (const auto& [taskId, outputs]: _episodes)
        episodes[taskId] = outputs;
    return Json {{"model", _identifier}, {"episodes", std::move(episodes)}};
}

// --- HTTP -------------------------------------------------------------------------------

HttpPolicy::HttpPolicy(Config config): _config(std::move(config))
{
    parse_base_url(_config.base_url);
}

HttpPolicy::Config HttpPolicy::config_from_env(std::string base_url)
{
    auto config = Config {};
    config.base_url = std::move(base_url);
    config.model = env_or("KNOWAGENT_MODEL", "default");
    config.api_key = env_or("KNOWAGENT_API_KEY", env_or("OPENAI_API_KEY", ""));
    config.timeout_seconds = std::atoi(env_or("KNOWAGENT_TIMEOUT", "60").c_str());
    config.max_retries = std::atoi(env_or("KNOWAGENT_HTTP_RETRIES", "3").c_str());
    return config;
}

std::unique_ptr<PolicySession> HttpPolicy::open(std::string_view) const
{
    return std::make_unique<HttpSession>(*this);
}

Json chat_request_body(const std::string& model, const std::string& prompt, std::span<const std::string> stop_markers,
                       const Sampling& sampling)
{
    auto body = Json::object();
    body["model"] = model;
    body["messages"] = Json::array({Json {{"role", "user"}, {"content", prompt}}});
    body["temperature"] = sampling.temperature;
    body["max_tokens"] = sampling.max_tokens;
    if (!stop_markers.empty())
    {
        auto stop = Json::array();
        for (size_t i = 0; i < stop_markers.size() && i < 4; ++i)
            stop.push_back(stop_markers[i]);
        body["stop"] = std::move(stop);
    }
    if (sampling.seed)
        body["seed"] = *sampling.seed;
    return body;
}

std::string truncate_at_stop(std::string textValue, std::span<const std::string> stop_markers)
{
    auto cut = textValue.size();
    for (const auto& marker: stop_markers)
        if (!marker.empty())
            cut = std::min(cut, textValue.find(marker));
    textValue.resize(std::min(cut, textValue.size()));
    return textValue;
}

std::string HttpPolicy::complete(const std::string& prompt, std::span<const std::string> stop_markers,
                                 const Sampling& sampling) const
{
    auto url = parse_base_url(_config.base_url);
    auto body = chat_request_body(_config.model, prompt, stop_markers, sampling).dump();

    auto headers = httplib::Headers {};
    if (!_config.api_key.empty())
        headers.emplace("Authorization", "Bearer " + _config.api_key);

    auto lastError = std::string {};
    for (int attempt = 0; attempt <= _config.max_retries; ++attempt)
    {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(_config.retry_backoff_ms * attempt));

        auto client = httplib::Client(url.origin);
        client.set_connection_timeout(_config.timeout_seconds, 0);
        client.set_read_timeout(_config.timeout_seconds, 0);
        client.set_write_timeout(_config.timeout_seconds, 0);

        auto res = client.Post(url.path, headers, body, "application/json");
        if (!res)
        {
            lastError = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500)
        {
            lastError = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw Error(ErrorCode::PolicyUnavailable, "chat completions returned HTTP " + std::to_string(res->status) + ": " + res->body);

        auto doc = Json::parse(res->body, nullptr, false);
        if (doc.is_discarded())
            throw Error(ErrorCode::PolicyUnavailable, "chat completions returned invalid JSON");
        try
        {
            auto content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
            return truncate_at_stop(std::move(content), stop_markers);
        }
        catch (const nlohmann::json::exception&)
        {
            throw Error(ErrorCode::PolicyUnavailable, "chat completions response has no choices[0].message.content");
        }
    }
    throw Error(ErrorCode::PolicyUnavailable, "policy endpoint unreachable after " + std::to_string(_config.max_retries + 1)
                                                  + " attempts (" + lastError + ")");
}

} // namespace knowagent

namespace knowagent
{

std::shared_ptr<PolicyClient> make_policy(std::string_view id, const ActionKnowledge* kb, std::span<const Scenario> scenarios)
{
    auto spec = std::string(text::trim(id));
    if (spec.empty())
        throw Error(ErrorCode::Usage, "empty policy identifier");
    if (text::starts_with(spec, "scripted:"))
        return ScriptedPolicy::load(spec.substr(9));
    if (spec == "gold")
    {
        if (!kb)
            throw Error(ErrorCode::Usage, "the gold policy needs a KB");
        return ScriptedPolicy::from_gold(scenarios, *kb);
    }
    if (text::starts_with(spec, "http://") || text::starts_with(spec, "https://"))
        return std::make_shared<HttpPolicy>(HttpPolicy::config_from_env(spec));
    if (text::starts_with(spec, "http:"))
        return std::make_shared<HttpPolicy>(HttpPolicy::config_from_env(spec.substr(5)));

    auto base = env_or("KNOWAGENT_BASE_URL", "");
    if (base.empty())
        throw Error(ErrorCode::Usage, "policy '" + spec + "' is a model name but KNOWAGENT_BASE_URL is not set");
    auto config = HttpPolicy::config_from_env(base);
    config.model = spec;
    return std::make_shared<HttpPolicy>(std::move(config));
}

} // namespace knowagent
