// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/environments.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

struct Sampling
{
    double temperature = 0.0;
    int max_tokens = 512;
    std::optional<int64_t> seed;
};

/// One episode's view of a text-generation policy. Generation must not touch
/// framework state.
class PolicySession
{
public:
    virtual ~PolicySession() = default;

    virtual std::string generate(const std::string& prompt, std::span<const std::string> stop_markers,
                                 const Sampling& sampling) = 0;
};

/// Opaque text-generation boundary. Implementations must tolerate concurrent
/// sessions.
class PolicyClient
{
public:
    virtual ~PolicyClient() = default;

    [[nodiscard]] virtual std::string identifier() const = 0;
    [[nodiscard]] virtual std::unique_ptr<PolicySession> open(std::string_view task_id) const = 0;
};

/// Thrown by a session that has nothing more to say for the episode (scripted
/// replay ran out). Recorded in the trajectory rather than aborting the batch.
class PolicyExhausted : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Replays canned step outputs per task id. Every session starts from the
/// beginning of its task's list.
class ScriptedPolicy final : public PolicyClient
{
public:
    ScriptedPolicy(std::string identifier, std::map<std::string, std::vector<std::string>> episodes);

    /// File format: {"model": "...", "episodes": {"<task_id>": ["<step output>", ...]}}.
    /// The identifier becomes "scripted:<path>".
    static std::shared_ptr<ScriptedPolicy> load(const std::string& path);

    /// Builds step outputs (declared path, a short thought, the action) from each
    /// scenario's gold script.
    static std::shared_ptr<ScriptedPolicy> from_gold(std::span<const Scenario> scenarios, const ActionKnowledge& kb,
                                                     std::string identifier = "gold");

    [[nodiscard]] std::string identifier() const override { return _identifier; }
    [[nodiscard]] std::unique_ptr<PolicySession> open(std::string_view task_id) const override;

    [[nodiscard]] const std::map<std::string, std::vector<std::string>>& episodes() const noexcept { return _episodes; }
    [[nodiscard]] Json to_json() const;

private:
    std::string _identifier;
    std::map<std::string, std::vector<std::string>> _episodes;
};

/// OpenAI-compatible chat-completions client.
class HttpPolicy final : public PolicyClient
{
public:
    struct Config
    {
        std::string base_url;      // e.g. http://localhost:8000/v1
        std::string model;
        std::string api_key;       // sent as a bearer token when non-empty
        int timeout_seconds = 60;
        int max_retries = 3;       // extra attempts on transport errors, 429 and 5xx
        int retry_backoff_ms = 500;
    };

    explicit HttpPolicy(Config config);

    /// base_url from the argument; model and key from KNOWAGENT_MODEL /
    /// KNOWAGENT_API_KEY (falling back to OPENAI_API_KEY).
    static Config config_from_env(std::string base_url);

    [[nodiscard]] std::string identifier() const override { return _config.model; }
    [[nodiscard]] std::unique_ptr<PolicySession> open(std::string_view task_id) const override;

    /// One chat-completions round trip; throws Error(PolicyUnavailable) once retries are spent.
    [[nodiscard]] std::string complete(const std::string& prompt, std::span<const std::string> stop_markers,
                                       const Sampling& sampling) const;

    [[nodiscard]] const Config& config() const noexcept { return _config; }

private:
    Config _config;
};

/// Request body sent to /chat/completions.
Json chat_request_body(const std::string& model, const std::string& prompt, std::span<const std::string> stop_markers,
                       const Sampling& sampling);

/// Cuts `text` at the first occurrence of any stop marker.
std::string truncate_at_stop(std::string text, std::span<const std::string> stop_markers);

} // namespace knowagent

namespace knowagent
{

/// Policy from a command-line style identifier:
///   scripted:<path>         replay file
///   http:<url> or <url>     chat-completions endpoint, model from KNOWAGENT_MODEL
///   gold                    the scenarios' gold scripts (needs kb and scenarios)
///   anything else           a model name served at KNOWAGENT_BASE_URL
std::shared_ptr<PolicyClient> make_policy(std::string_view id, const ActionKnowledge* kb = nullptr,
                                          std::span<const Scenario> scenarios = {});

} // namespace knowagent
