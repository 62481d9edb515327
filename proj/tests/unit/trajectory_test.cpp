// SPDX-License-Identifier: Apache-2.0
#include "knowagent/environments.hpp"
#include "knowagent/trajectory.hpp"

#include "../support/test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace knowagent;
using namespace knowagent::testing;

namespace
{

const ActionKnowledge& hotpot()
{
    static const auto kb = load_kb(data_path("kb/hotpotqa.kb.json"));
    return kb;
}

const ActionKnowledge& household(const std::string& kind)
{
    static std::map<std::string, ActionKnowledge> cache;
    auto it = cache.find(kind);
    if (it == cache.end())
        it = cache.emplace(kind, load_kb(data_path("kb/alfworld_" + kind + ".kb.json"))).first;
    return it->second;
}

ActionInvocation call(std::string name, std::vector<std::string> args)
{
    return ActionInvocation {.name = std::move(name), .args = std::move(args), .raw = {}};
}

} // namespace

TEST(Trajectory, ParsesBracketActions)
{
    auto parsed = parse_action("Search[Gary Harrison]", hotpot());
    ASSERT_TRUE(std::holds_alternative<ActionInvocation>(parsed));
    const auto& a = std::get<ActionInvocation>(parsed);
    EXPECT_EQ(a.name, "Search");
    EXPECT_EQ(a.args, std::vector<std::string> {"Gary Harrison"});
    EXPECT_EQ(format_action(a, hotpot()), "Search[Gary Harrison]");
}

TEST(Trajectory, ParsesVerbPhraseActions)
{
    const auto& kb = household("clean");
    auto parsed = parse_action("take apple 1 from countertop 1", kb);
    ASSERT_TRUE(std::holds_alternative<ActionInvocation>(parsed));
    const auto& a = std::get<ActionInvocation>(parsed);
    EXPECT_EQ(a.name, "Take");
    EXPECT_EQ(a.args, (std::vector<std::string> {"apple 1", "countertop 1"}));
    EXPECT_EQ(format_action(a, kb), "take apple 1 from countertop 1");
    EXPECT_EQ(format_path_token(a, kb), "Take(apple 1, countertop 1)");

    auto clean = std::get<ActionInvocation>(parse_action("clean apple 1 with sinkbasin 1", kb));
    EXPECT_EQ(clean.name, "Clean");
}

TEST(Trajectory, UnparsableAction)
{
    auto parsed = parse_action("do a barrel roll", hotpot());
    ASSERT_TRUE(std::holds_alternative<ParseFailure>(parsed));
    EXPECT_EQ(std::get<ParseFailure>(parsed).kind, ParseFailureKind::UnknownActionSyntax);
    EXPECT_TRUE(std::holds_alternative<ParseFailure>(parse_action("   ", hotpot())));
}

TEST(Trajectory, StepBlockParse)
{
    auto out = "ActionPath 2: Start->Search[Gary Harrison]\nThought 2: I look up the count.\nAction 2: Lookup[major-label]";
    auto parsed = parse_step_output(out, hotpot(), 1);
    ASSERT_TRUE(std::holds_alternative<ParsedStep>(parsed));
    const auto& s = std::get<ParsedStep>(parsed);
    ASSERT_EQ(s.action_path.size(), 2u);
    EXPECT_EQ(s.action_path[0].name, "Start");
    EXPECT_TRUE(s.action_path[1].same_call(call("Search", {"Gary Harrison"})));
    EXPECT_EQ(s.thought, "I look up the count.");
    EXPECT_TRUE(s.action.same_call(call("Lookup", {"major-label"})));
}

TEST(Trajectory, StepBlockFailures)
{
    auto kind_of = [](std::string_view out) {
        auto parsed = parse_step_output(out, hotpot(), 0);
        EXPECT_TRUE(std::holds_alternative<ParseFailure>(parsed)) << out;
        return std::holds_alternative<ParseFailure>(parsed) ? std::get<ParseFailure>(parsed) : ParseFailure {};
    };
    auto f = kind_of("Thought 1: hmm\nAction 1: Search[x]");
    EXPECT_EQ(f.kind, ParseFailureKind::MissingField);
    EXPECT_EQ(f.field, "ActionPath");
    f = kind_of("ActionPath 1: Start\nAction 1: Search[x]");
    EXPECT_EQ(f.field, "Thought");
    f = kind_of("ActionPath 1: Start\nThought 1: hmm");
    EXPECT_EQ(f.field, "Action");
    f = kind_of("ActionPath 1: Search[x]\nThought 1: hmm\nAction 1: Search[x]");
    EXPECT_EQ(f.kind, ParseFailureKind::MalformedActionPath);
    f = kind_of("ActionPath 1: Start\nThought 1: hmm\nAction 1: ???");
    EXPECT_EQ(f.kind, ParseFailureKind::UnknownActionSyntax);
}

TEST(Trajectory, MultiLineThought)
{
    auto parsed = parse_step_output("ActionPath 1: Start\nThought 1: first\nsecond\nAction 1: Search[x]", hotpot(), 0);
    ASSERT_TRUE(std::holds_alternative<ParsedStep>(parsed));
    EXPECT_EQ(std::get<ParsedStep>(parsed).thought, "first\nsecond");
}

// Property: format then parse is the identity on (path, thought, action) for generated steps.
TEST(Trajectory, FormatParseRoundTrip)
{
    std::mt19937 rng(20240501);
    const std::vector<std::string> topics {"Gary Harrison", "Arthur's Magazine", "1.5 km", "Bryan White (singer)",
                                           "x-y", "New York City"};
    const std::vector<std::string> names {"Search", "Retrieve", "Lookup", "Finish"};
    for (int trial = 0; trial < 300; ++trial)
    {
        auto traj = Trajectory {};
        auto len = 1 + rng() % 6;
        for (size_t i = 0; i < len; ++i)
        {
            auto step = Step {};
            step.index = i;
            step.action_path = canonical_path(traj, i);
            step.thought = "thought " + std::to_string(rng() % 1000);
            step.action = call(names[rng() % names.size()], {topics[rng() % topics.size()]});
            traj.steps.push_back(step);
        }
        for (const auto& step: traj.steps)
        {
            auto text = format_step_output(step, hotpot());
            auto parsed = parse_step_output(text, hotpot(), step.index);
            ASSERT_TRUE(std::holds_alternative<ParsedStep>(parsed)) << text;
            const auto& p = std::get<ParsedStep>(parsed);
            ASSERT_EQ(p.action_path.size(), step.action_path.size()) << text;
            for (size_t k = 0; k < p.action_path.size(); ++k)
                EXPECT_TRUE(p.action_path[k].same_call(step.action_path[k])) << text;
            EXPECT_EQ(p.thought, step.thought);
            EXPECT_TRUE(p.action.same_call(step.action)) << text;
        }
    }
}

TEST(Trajectory, HouseholdRoundTrip)
{
    for (const auto& kind: household_kinds())
    {
        const auto& kb = household(kind);
        auto scenarios = load_scenarios(data_path("scenarios/alfworld_" + kind + ".jsonl"));
        for (const auto& sc: scenarios)
        {
            auto traj = trajectory_from_lines(kb, sc.gold_script);
            for (const auto& step: traj.steps)
            {
                EXPECT_EQ(format_action(step.action, kb), sc.gold_script[step.index]);
                auto parsed = parse_step_output(format_step_output(step, kb), kb, step.index);
                ASSERT_TRUE(std::holds_alternative<ParsedStep>(parsed)) << format_step_output(step, kb);
                EXPECT_TRUE(std::get<ParsedStep>(parsed).action.same_call(step.action));
                EXPECT_EQ(std::get<ParsedStep>(parsed).action_path.size(), step.index + 1);
            }
        }
    }
}

TEST(Trajectory, ScratchpadAndCanonicalPath)
{
    auto traj = trajectory_from_lines(hotpot(), {"Search[A]", "Lookup[k]"});
    traj.steps[0].observation = "obs one";
    traj.steps[1].observation = "obs two";
    auto pad = serialize_scratchpad(traj, hotpot());
    EXPECT_EQ(pad, "\nActionPath 1: Start\nThought 1: step\nAction 1: Search[A]\nObservation 1: obs one"
                   "\nActionPath 2: Start->Search[A]\nThought 2: step\nAction 2: Lookup[k]\nObservation 2: obs two");
    EXPECT_EQ(serialize_scratchpad(traj, hotpot(), 0), "");
    EXPECT_EQ(canonical_path(traj, 2).size(), 3u);

    traj.steps[0].parse_error = ParseFailure {};
    traj.steps[0].raw_output = "garbage";
    EXPECT_EQ(canonical_path(traj, 2).size(), 2u);
    EXPECT_EQ(format_step_output(traj.steps[0], hotpot()), "garbage");
}

TEST(Trajectory, JsonlRoundTrip)
{
    auto traj = trajectory_from_lines(hotpot(), {"Search[A]", "Finish[yes]"});
    traj.task_id = "t";
    traj.task_text = "Q?";
    traj.steps[0].observation = "o";
    traj.steps[0].rejections.push_back({"bad", "misordered_action"});
    traj.steps[1].warnings.push_back("path_mismatch");
    traj.outcome = Outcome {.reward = 0.5, .success = false, .answer = "yes"};
    traj.terminated_by = Termination::TerminalAction;
    auto broken = trajectory_from_lines(hotpot(), {"Search[B]"});
    broken.task_id = "u";
    broken.steps.push_back(Step {.index = 1, .parse_error = ParseFailure {ParseFailureKind::MissingField, "Action", "x"},
                                 .raw_output = "oops"});
    broken.terminated_by = Termination::PolicyError;
    broken.error = "boom";

    auto path = (scratch_dir("trajectory-jsonl") / "t.jsonl").string();
    write_trajectories(path, {traj, broken});
    auto back = read_trajectories(path);
    ASSERT_EQ(back.size(), 2u);
    for (auto* t: {&traj, &broken})
        for (auto& s: t->steps)
            for (auto& p: s.action_path)
                p.raw.clear();
    for (auto& t: back)
        for (auto& s: t.steps)
            for (auto& p: s.action_path)
                p.raw.clear();
    EXPECT_EQ(to_json(back[0]).dump(), to_json(traj).dump());
    EXPECT_EQ(to_json(back[1]).dump(), to_json(broken).dump());
    EXPECT_EQ(to_jsonl({traj}), to_json(traj).dump() + "\n");
}
