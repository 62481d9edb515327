// SPDX-License-Identifier: Apache-2.0
#include "knowagent/agent_runtime.hpp"
#include "knowagent/error.hpp"

#include "../support/test_support.hpp"

#include <gtest/gtest.h>

using namespace knowagent;
using namespace knowagent::testing;

namespace
{

const ActionKnowledge& hotpot()
{
    static const auto kb = load_kb(data_path("kb/hotpotqa.kb.json"));
    return kb;
}

const std::vector<Scenario>& qa_scenarios()
{
    static const auto s = load_scenarios(data_path("scenarios/hotpotqa.jsonl"));
    return s;
}

const Scenario& harrison()
{
    return qa_scenarios().front();
}

std::string block(size_t k, const std::string& path, const std::string& action)
{
    auto n = std::to_string(k);
    return "ActionPath " + n + ": " + path + "\nThought " + n + ": thinking.\nAction " + n + ": " + action;
}

std::shared_ptr<ScriptedPolicy> script(std::vector<std::string> outputs, const std::string& task = "qa-harrison")
{
    return std::make_shared<ScriptedPolicy>("test", std::map<std::string, std::vector<std::string>> {{task, outputs}});
}

} // namespace

TEST(AgentRuntime, EnforcementNames)
{
    EXPECT_EQ(enforcement_from_string("reject-retry"), Enforcement::RejectRetry);
    EXPECT_EQ(enforcement_from_string("reject_retry"), Enforcement::RejectRetry);
    EXPECT_EQ(to_string(Enforcement::Warn), "warn");
    EXPECT_THROW(enforcement_from_string("strict"), Error);
    EXPECT_EQ(corrective_line({StepFlag::MisorderedAction}, {"Search", "Retrieve"}),
              "Invalid step: misordered_action. Allowed next actions: Search, Retrieve.");
}

TEST(AgentRuntime, GoldEpisodeEndsWithTerminalAction)
{
    auto policy = ScriptedPolicy::from_gold(qa_scenarios(), hotpot());
    auto traj = run_episode(hotpot(), harrison(), *policy, EpisodeConfig {});
    EXPECT_EQ(traj.terminated_by, Termination::TerminalAction);
    ASSERT_EQ(traj.steps.size(), 3u);
    EXPECT_EQ(traj.outcome.answer, "300");
    EXPECT_DOUBLE_EQ(traj.outcome.reward, 1.0);
    EXPECT_TRUE(traj.outcome.success);
    EXPECT_NE(traj.steps[1].observation.find("300 major-label"), std::string::npos);
    EXPECT_TRUE(validate_trajectory(hotpot(), traj).clean);
}

TEST(AgentRuntime, PromptsCarryScratchpad)
{
    auto policy = ScriptedPolicy::from_gold(qa_scenarios(), hotpot());
    auto prompts = std::vector<std::string> {};
    run_episode(hotpot(), harrison(), *policy, EpisodeConfig {},
                [&](size_t, size_t, const std::string& p) { prompts.push_back(p); });
    ASSERT_EQ(prompts.size(), 3u);
    auto system = render_system_prompt(build_template(hotpot()));
    EXPECT_EQ(prompts[0], system + "\nQuestion: " + harrison().task_text);
    EXPECT_EQ(prompts[1].rfind(prompts[0] + "\nActionPath 1: Start\n", 0), 0u);
    EXPECT_NE(prompts[2].find("Observation 2: (Result 1 / 1)"), std::string::npos);
}

TEST(AgentRuntime, StepLimit)
{
    auto outputs = std::vector<std::string> {};
    auto path = std::string("Start");
    for (size_t k = 1; k <= 5; ++k)
    {
        outputs.push_back(block(k, path, "Search[Gary Harrison]"));
        path += "->Search[Gary Harrison]";
    }
    auto config = EpisodeConfig {};
    config.max_steps = 3;
    auto traj = run_episode(hotpot(), harrison(), *script(outputs), config);
    EXPECT_EQ(traj.terminated_by, Termination::StepLimit);
    EXPECT_EQ(traj.steps.size(), 3u);
    EXPECT_DOUBLE_EQ(traj.outcome.reward, 0.0);
}

TEST(AgentRuntime, ExhaustedScriptIsPolicyError)
{
    auto traj = run_episode(hotpot(), harrison(), *script({block(1, "Start", "Search[Gary Harrison]")}), EpisodeConfig {});
    EXPECT_EQ(traj.terminated_by, Termination::PolicyError);
    EXPECT_EQ(traj.steps.size(), 1u);
    ASSERT_TRUE(traj.error.has_value());
}

TEST(AgentRuntime, ParseErrorStepGetsFormatObservation)
{
    auto traj = run_episode(hotpot(), harrison(),
                            *script({"I have no idea.", block(2, "Start", "Search[Gary Harrison]"),
                                     block(3, "Start->Search[Gary Harrison]", "Finish[300]")}),
                            EpisodeConfig {});
    ASSERT_EQ(traj.steps.size(), 3u);
    EXPECT_FALSE(traj.steps[0].parsed());
    EXPECT_EQ(traj.steps[0].observation, kParseErrorObservation);
    EXPECT_EQ(traj.terminated_by, Termination::TerminalAction);
    auto report = validate_trajectory(hotpot(), traj);
    EXPECT_EQ(report.parse_errors, 1u);
    EXPECT_EQ(report.misordered, 0u);
}

TEST(AgentRuntime, ModelWrittenObservationIsCut)
{
    auto traj = run_episode(hotpot(), harrison(),
                            *script({block(1, "Start", "Finish[300]") + "\nObservation 1: I made this up."}),
                            EpisodeConfig {});
    ASSERT_EQ(traj.steps.size(), 1u);
    EXPECT_EQ(traj.steps[0].action.args, std::vector<std::string> {"300"});
    EXPECT_EQ(traj.steps[0].observation, "Answer submitted: 300");
}

TEST(AgentRuntime, WarnModeRecordsFlags)
{
    auto config = EpisodeConfig {};
    config.enforcement = Enforcement::Warn;
    auto traj = run_episode(hotpot(), harrison(),
                            *script({block(1, "Start", "Lookup[major-label]"), block(2, "Start->Lookup[major-label]",
                                                                                       "Finish[300]")}),
                            config);
    ASSERT_EQ(traj.steps.size(), 2u);
    EXPECT_EQ(traj.steps[0].warnings, std::vector<std::string> {"misordered_action"});
    EXPECT_TRUE(traj.steps[1].warnings.empty());
    EXPECT_EQ(traj.steps[0].observation, kNoPassageYet);
}

TEST(AgentRuntime, RejectRetryReprompts)
{
    auto config = EpisodeConfig {};
    config.enforcement = Enforcement::RejectRetry;
    auto prompts = std::vector<std::pair<size_t, std::string>> {};
    auto traj = run_episode(hotpot(), harrison(),
                            *script({block(1, "Start", "Lookup[major-label]"), block(1, "Start", "Search[Gary Harrison]"),
                                     block(2, "Start->Search[Gary Harrison]", "Finish[300]")}),
                            config, [&](size_t, size_t attempt, const std::string& p) { prompts.emplace_back(attempt, p); });
    ASSERT_EQ(traj.steps.size(), 2u);
    EXPECT_EQ(traj.steps[0].rejections.size(), 1u);
    EXPECT_EQ(traj.retries(), 1u);
    EXPECT_TRUE(validate_trajectory(hotpot(), traj).clean);
    ASSERT_EQ(prompts.size(), 3u);
    EXPECT_EQ(prompts[1].first, 1u);
    auto expectedTail = "\nInvalid step: misordered_action. Allowed next actions: Search, Retrieve.";
    EXPECT_EQ(prompts[1].second, prompts[0].second + expectedTail);
}

TEST(AgentRuntime, RejectRetryGivesUp)
{
    auto config = EpisodeConfig {};
    config.enforcement = Enforcement::RejectRetry;
    config.max_retries = 2;
    auto bad = block(1, "Start", "Lookup[major-label]");
    auto traj = run_episode(hotpot(), harrison(), *script({bad, bad, bad, bad}), config);
    EXPECT_EQ(traj.terminated_by, Termination::PolicyError);
    EXPECT_TRUE(traj.steps.empty());
    ASSERT_TRUE(traj.error.has_value());
    EXPECT_NE(traj.error->find("rejected after 2 retries"), std::string::npos);
}

TEST(AgentRuntime, HouseholdGoalReached)
{
    auto kb = load_kb(data_path("kb/alfworld_heat.kb.json"));
    auto scenarios = load_scenarios(data_path("scenarios/alfworld_heat.jsonl"));
    auto policy = ScriptedPolicy::from_gold(scenarios, kb);
    for (const auto& sc: scenarios)
    {
        auto traj = run_episode(kb, sc, *policy, EpisodeConfig {});
        EXPECT_EQ(traj.terminated_by, Termination::GoalReached) << sc.task_id;
        EXPECT_TRUE(traj.outcome.success);
        EXPECT_EQ(traj.steps.size(), sc.gold_script.size());
    }
}

TEST(AgentRuntime, BatchKeepsOrderAcrossThreads)
{
    auto policy = ScriptedPolicy::from_gold(qa_scenarios(), hotpot());
    auto serial = run_batch(qa_scenarios(), hotpot(), *policy, EpisodeConfig {}, 1);
    auto parallel = run_batch(qa_scenarios(), hotpot(), *policy, EpisodeConfig {}, 4);
    ASSERT_EQ(serial.trajectories.size(), qa_scenarios().size());
    EXPECT_EQ(serial.trajectories, parallel.trajectories);
    for (size_t i = 0; i < qa_scenarios().size(); ++i)
        EXPECT_EQ(serial.trajectories[i].task_id, qa_scenarios()[i].task_id);
    EXPECT_EQ(serial.metrics.metric, "f1");
    EXPECT_DOUBLE_EQ(serial.metrics.mean_reward, 1.0);
    EXPECT_EQ(to_json(serial.metrics)["mean_f1"], 1.0);
    EXPECT_THROW(run_batch({}, hotpot(), *policy, EpisodeConfig {}), Error);
}

TEST(AgentRuntime, UnreachablePolicyBecomesFailedTrajectory)
{
    auto config = HttpPolicy::Config {};
    config.base_url = "http://127.0.0.1:9";
    config.model = "m";
    config.timeout_seconds = 1;
    config.max_retries = 0;
    auto policy = HttpPolicy(config);
    auto tasks = std::vector<Scenario>(qa_scenarios().begin(), qa_scenarios().begin() + 2);
    auto batch = run_batch(tasks, hotpot(), policy, EpisodeConfig {});
    ASSERT_EQ(batch.trajectories.size(), 2u);
    for (const auto& t: batch.trajectories)
    {
        EXPECT_EQ(t.terminated_by, Termination::PolicyError);
        ASSERT_TRUE(t.error.has_value());
        EXPECT_EQ(t.error->rfind("POLICY_UNAVAILABLE", 0), 0u);
    }
    EXPECT_EQ(batch.metrics.failed, 2u);
}
