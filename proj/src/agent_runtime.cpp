// SPDX-License-Identifier: Apache-2.0
#include "knowagent/agent_runtime.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace knowagent
{

namespace
{

std::string flags_text(const std::vector<StepFlag>& flags)
{
    auto parts = std::vector<std::string> {};
    for (auto f: flags)
        parts.emplace_back(to_string(f));
    return text::join(parts, ", ");
}

// Name of the last declared action, which is what the next step transitions from.
std::string last_declared(const ActionKnowledge& kb, const Trajectory& traj)
{
    for (auto it = traj.steps.rbegin(); it != traj.steps.rend(); ++it)
        if (it->parsed() && kb.find_action(it->action.name))
            return it->action.name;
    return std::string(kStart);
}

Step step_from_output(const std::string& output, const ActionKnowledge& kb, size_t index)
{
    auto step = Step {};
    step.index = index;
    auto parsed = parse_step_output(output, kb, index);
    if (auto* failure = std::get_if<ParseFailure>(&parsed))
    {
        step.parse_error = *failure;
        step.raw_output = output;
        return step;
    }
    auto& ok = std::get<ParsedStep>(parsed);
    step.action_path = std::move(ok.action_path);
    step.thought = std::move(ok.thought);
    step.action = std::move(ok.action);
    return step;
}

std::vector<StepFlag> candidate_flags(const ActionKnowledge& kb, Trajectory& traj, const Step& candidate,
                                      const ValidationOptions& options)
{
    traj.steps.push_back(candidate);
    auto report = validate_trajectory(kb, traj, options);
    traj.steps.pop_back();
    return report.verdicts.back().flags;
}

} // namespace

std::string_view to_string(Enforcement e)
{
    switch (e)
    {
        case Enforcement::Off: return "off";
        case Enforcement::Warn: return "warn";
        case Enforcement::RejectRetry: return "reject_retry";
    }
    return "off";
}

Enforcement enforcement_from_string(std::string_view s)
{
    if (s == "off")
        return Enforcement::Off;
    if (s == "warn")
        return Enforcement::Warn;
    if (s == "reject-retry" || s == "reject_retry")
        return Enforcement::RejectRetry;
    throw Error(ErrorCode::Usage, "unknown enforcement mode '" + std::string(s) + "' (off, warn, reject-retry)");
}

size_t resolve_max_steps(const EpisodeConfig& config, const Scenario& scenario)
{
    if (config.max_steps)
        return *config.max_steps;
    return scenario.is_qa() ? kQaMaxSteps : kHouseholdMaxSteps;
}

const std::vector<std::string>& step_stop_markers()
{
    static const auto markers = std::vector<std::string> {"\nObservation"};
    return markers;
}

std::string corrective_line(const std::vector<StepFlag>& flags, const std::vector<std::string>& allowed)
{
    return "Invalid step: " + flags_text(flags) + ". Allowed next actions: " + text::join(allowed, ", ") + ".";
}

Trajectory run_episode(const ActionKnowledge& kb, const PromptTemplate& tmpl, const EpisodeSpec& spec, Environment& env,
                       const PolicyClient& policy, const EpisodeConfig& config, const PromptObserver& observer)
{
    if (config.enforcement == Enforcement::RejectRetry && config.max_retries < 1)
        throw Error(ErrorCode::Usage, "reject_retry needs max_retries >= 1");

    auto traj = Trajectory {};
    traj.task_id = spec.task_id;
    traj.task_text = spec.task_text;
    traj.terminated_by = Termination::StepLimit;

    auto session = policy.open(spec.task_id);
    const auto& stops = step_stop_markers();

    auto finish = [&](Termination how) {
        traj.terminated_by = how;
        traj.outcome = env.outcome();
        return traj;
    };

    for (size_t t = 0; t < spec.max_steps; ++t)
    {
        auto scratchpad = serialize_scratchpad(traj, kb);
        auto rejections = std::vector<Rejection> {};
        auto step = Step {};
        auto accepted = false;

        for (size_t attempt = 0; !accepted; ++attempt)
        {
            auto prompt = render_episode_prompt(tmpl, spec.task_text, scratchpad);
            if (observer)
                observer(t, attempt, prompt);

            auto output = std::string {};
            try
            {
                output = truncate_at_stop(session->generate(prompt, stops, config.sampling), stops);
            }
            catch (const PolicyExhausted& e)
            {
                traj.error = e.what();
                return finish(Termination::PolicyError);
            }

            step = step_from_output(output, kb, t);
            if (config.enforcement == Enforcement::Off)
                break;

            auto flags = candidate_flags(kb, traj, step, config.validation);
            if (flags.empty())
                break;
            if (config.enforcement == Enforcement::Warn)
            {
                for (auto f: flags)
                    step.warnings.emplace_back(to_string(f));
                break;
            }

            auto line = corrective_line(flags, kb.successors(last_declared(kb, traj)));
            rejections.push_back(Rejection {.output = output, .reason = flags_text(flags)});
            if (attempt >= config.max_retries)
            {
                traj.error = "step " + std::to_string(t + 1) + " rejected after " + std::to_string(config.max_retries)
                             + " retries: " + flags_text(flags);
                return finish(Termination::PolicyError);
            }
            scratchpad += "\n" + line;
        }

        step.rejections = std::move(rejections);
        if (!step.parsed())
        {
            step.observation = std::string(kParseErrorObservation);
            traj.steps.push_back(std::move(step));
            continue;
        }

        auto result = env.step(step.action);
        step.observation = result.observation;
        auto terminal = kb.is_terminal(step.action.name);
        traj.steps.push_back(std::move(step));
        if (terminal)
            return finish(Termination::TerminalAction);
        if (result.done)
            return finish(Termination::GoalReached);
    }
    return finish(Termination::StepLimit);
}

Trajectory run_episode(const ActionKnowledge& kb, const Scenario& scenario, const PolicyClient& policy,
                       const EpisodeConfig& config, const PromptObserver& observer)
{
    auto tmpl = build_template(kb);
    auto env = make_environment(scenario, &kb);
    auto spec = EpisodeSpec {scenario.task_id, scenario.task_text, resolve_max_steps(config, scenario)};
    return run_episode(kb, tmpl, spec, *env, policy, config, observer);
}

BatchMetrics summarize(const std::vector<Trajectory>& trajectories, const std::vector<ValidationReport>& reports,
                       std::string policy, bool qa)
{
    auto m = BatchMetrics {};
    m.policy = std::move(policy);
    m.metric = qa ? "f1" : "success_rate";
    m.episodes = trajectories.size();
    auto reward = 0.0;
    size_t successes = 0;
    for (const auto& traj: trajectories)
    {
        reward += traj.outcome.reward;
        successes += traj.outcome.success ? 1 : 0;
        m.failed += traj.terminated_by == Termination::PolicyError ? 1 : 0;
        m.retries += traj.retries();
    }
    if (!trajectories.empty())
    {
        m.mean_reward = reward / static_cast<double>(trajectories.size());
        m.success_rate = static_cast<double>(successes) / static_cast<double>(trajectories.size());
    }
    if (!reports.empty())
        m.rates = compute_rates(reports);
    return m;
}

BatchResult run_batch(std::span<const Scenario> tasks, const ActionKnowledge& kb, const PolicyClient& policy,
                      const EpisodeConfig& config, size_t parallelism)
{
    if (tasks.empty())
        throw Error(ErrorCode::EmptyInput, "task list is empty");

    auto tmpl = build_template(kb);
    auto result = BatchResult {};
    result.trajectories.resize(tasks.size());

    auto next = std::atomic<size_t> {0};
    auto firstError = std::exception_ptr {};
    auto errorMutex = std::mutex {};

    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
        {
            const auto& scenario = tasks[i];
            try
            {
                auto env = make_environment(scenario, &kb);
                auto spec = EpisodeSpec {scenario.task_id, scenario.task_text, resolve_max_steps(config, scenario)};
                result.trajectories[i] = run_episode(kb, tmpl, spec, *env, policy, config);
            }
            catch (const Error& e)
            {
                if (e.code() != ErrorCode::PolicyUnavailable)
                {
                    auto lock = std::lock_guard(errorMutex);
                    if (!firstError)
                        firstError = std::current_exception();
                    continue;
                }
                auto& traj = result.trajectories[i];
                traj.task_id = scenario.task_id;
                traj.task_text = scenario.task_text;
                traj.terminated_by = Termination::PolicyError;
                traj.error = std::string(to_string(e.code())) + ": " + e.what();
            }
        }
    };

    auto threads = std::max<size_t>(1, std::min(parallelism, tasks.size()));
    if (threads == 1)
        worker();
    else
    {
        auto pool = std::vector<std::jthread> {};
        for (size_t i = 0; i < threads; ++i)
            pool.emplace_back(worker);
    }
    if (firstError)
        std::rethrow_exception(firstError);

    for (const auto& traj: result.trajectories)
        result.reports.push_back(validate_trajectory(kb, traj, config.validation));
    result.metrics = summarize(result.trajectories, result.reports, policy.identifier(), tasks.front().is_qa());
    return result;
}

Json to_json(const BatchMetrics& metrics)
{
    auto doc = Json::object();
    doc["policy"] = metrics.policy;
    doc["metric"] = metrics.metric;
    doc["episodes"] = metrics.episodes;
    doc["failed"] = metrics.failed;
    doc["mean_reward"] = metrics.mean_reward;
    if (metrics.metric == "f1")
        doc["mean_f1"] = metrics.mean_reward;
    doc["success_rate"] = metrics.success_rate;
    doc["retries"] = metrics.retries;
    doc["rates"] = to_json(metrics.rates);
    return doc;
}

} // namespace knowagent
