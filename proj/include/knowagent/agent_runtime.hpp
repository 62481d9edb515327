// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/environments.hpp"
#include "knowagent/policy.hpp"
#include "knowagent/prompt_render.hpp"
#include "knowagent/trajectory.hpp"
#include "knowagent/validator.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

enum class Enforcement
{
    Off,
    Warn,        // record violations on the step, do not intervene
    RejectRetry, // re-prompt with a corrective line until the step is clean
};

std::string_view to_string(Enforcement e);
/// Accepts off, warn, reject-retry and reject_retry. Throws Error(Usage).
Enforcement enforcement_from_string(std::string_view s);

inline constexpr size_t kQaMaxSteps = 10;
inline constexpr size_t kHouseholdMaxSteps = 30;

struct EpisodeConfig
{
    std::optional<size_t> max_steps; // unset: 10 for QA, 30 for household
    Enforcement enforcement = Enforcement::Off;
    size_t max_retries = 3;
    Sampling sampling;
    ValidationOptions validation;
};

size_t resolve_max_steps(const EpisodeConfig& config, const Scenario& scenario);

/// Generation stops before the model can write its own observation.
const std::vector<std::string>& step_stop_markers();

inline constexpr std::string_view kParseErrorObservation =
    "Invalid format. Expected ActionPath, Thought and Action lines.";

/// `Invalid step: <flags>. Allowed next actions: <successors>.`
std::string corrective_line(const std::vector<StepFlag>& flags, const std::vector<std::string>& allowed);

/// Called with every prompt sent to the policy (step index, attempt, prompt).
using PromptObserver = std::function<void(size_t, size_t, const std::string&)>;

struct EpisodeSpec
{
    std::string task_id;
    std::string task_text;
    size_t max_steps = kQaMaxSteps;
};

/// Drives one episode. In-episode anomalies (unparsable output, exhausted script,
/// rejected steps) end up in the trajectory; Error(PolicyUnavailable) propagates.
Trajectory run_episode(const ActionKnowledge& kb, const PromptTemplate& tmpl, const EpisodeSpec& spec, Environment& env,
                       const PolicyClient& policy, const EpisodeConfig& config, const PromptObserver& observer = {});

Trajectory run_episode(const ActionKnowledge& kb, const Scenario& scenario, const PolicyClient& policy,
                       const EpisodeConfig& config, const PromptObserver& observer = {});

struct BatchMetrics
{
    std::string policy;
    std::string metric; // "f1" for QA corpora, "success_rate" otherwise
    size_t episodes = 0;
    size_t failed = 0; // policy_error terminations
    double mean_reward = 0.0;
    double success_rate = 0.0;
    size_t retries = 0;
    AggregateRates rates;
};

struct BatchResult
{
    std::vector<Trajectory> trajectories; // input order
    std::vector<ValidationReport> reports;
    BatchMetrics metrics;
};

BatchMetrics summarize(const std::vector<Trajectory>& trajectories, const std::vector<ValidationReport>& reports,
                       std::string policy, bool qa);

/// Runs every scenario against the shared KB. A task whose policy is unreachable
/// becomes a failed trajectory. Throws Error(EmptyInput) on an empty task list.
BatchResult run_batch(std::span<const Scenario> tasks, const ActionKnowledge& kb, const PolicyClient& policy,
                      const EpisodeConfig& config, size_t parallelism = 1);

Json to_json(const BatchMetrics& metrics);

} // namespace knowagent
