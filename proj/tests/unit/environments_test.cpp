// SPDX-License-Identifier: Apache-2.0
#include "knowagent/environments.hpp"
#include "knowagent/error.hpp"

#include "../support/test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <random>
#include <sstream>

using namespace knowagent;
using namespace knowagent::testing;

namespace
{

// Second, independently written token F1.
double reference_f1(const std::string& prediction, const std::string& gold)
{
    auto tokens = [](const std::string& s) {
        auto cleaned = std::string {};
        for (unsigned char c: s)
            cleaned += std::ispunct(c) ? ' ' : static_cast<char>(std::tolower(c));
        auto counts = std::map<std::string, int> {};
        std::istringstream in(cleaned);
        for (std::string w; in >> w;)
            if (w != "a" && w != "an" && w != "the")
                ++counts[w];
        return counts;
    };
    auto p = tokens(prediction), g = tokens(gold);
    int np = 0, ng = 0, common = 0;
    for (const auto& [w, n]: p)
    {
        np += n;
        if (auto it = g.find(w); it != g.end())
            common += std::min(n, it->second);
    }
    for (const auto& [w, n]: g)
        ng += n;
    if (np == 0 || ng == 0 || common == 0)
        return 0.0;
    auto precision = double(common) / np, recall = double(common) / ng;
    return 2 * precision * recall / (precision + recall);
}

ActionInvocation call(std::string name, std::vector<std::string> args)
{
    return ActionInvocation {.name = std::move(name), .args = std::move(args), .raw = {}};
}

QaWorld small_world()
{
    auto w = QaWorld {};
    w.corpus = {
        {"Gary Harrison",
         {{"Gary Steven Harrison is an American songwriter.",
           "Harrison began his career in the 1970s, and has written over 300 major-label recorded songs.",
           "His songs include major-label hits for several artists."}}},
        {"Bryan White", {{"Bryan Shelton White is an American country music singer."}}},
    };
    w.gold_answer = "300";
    return w;
}

} // namespace

TEST(F1, FixedValues)
{
    EXPECT_DOUBLE_EQ(f1_score("yes", "yes"), 1.0);
    EXPECT_NEAR(f1_score("300 major-label songs", "300"), 0.4, 1e-9);
    EXPECT_DOUBLE_EQ(f1_score("", "x"), 0.0);
    EXPECT_DOUBLE_EQ(f1_score("The Eiffel Tower", "eiffel tower!"), 1.0);
    EXPECT_DOUBLE_EQ(f1_score("a an the", "the"), 0.0);
    EXPECT_EQ(normalize_answer_tokens("The Major-Label, songs"), (std::vector<std::string> {"major", "label", "songs"}));
}

TEST(F1, AgreesWithReferenceImplementation)
{
    std::mt19937 rng(99);
    const std::vector<std::string> pool {"300", "songs", "the", "A", "major-label", "Yes", "no", "Paris,", "paris", "an",
                                         "x", "U.S.", "1,000", "tower"};
    auto sample = [&] {
        auto s = std::string {};
        for (size_t i = 0, n = rng() % 6; i < n; ++i)
            s += (i ? " " : "") + pool[rng() % pool.size()];
        return s;
    };
    for (int trial = 0; trial < 2000; ++trial)
    {
        auto p = sample(), g = sample();
        EXPECT_NEAR(f1_score(p, g), reference_f1(p, g), 1e-12) << "'" << p << "' vs '" << g << "'";
        EXPECT_NEAR(f1_score(p, g), f1_score(g, p), 1e-12);
    }
}

TEST(QaWorld, RetrieveSearchLookupFinish)
{
    auto w = small_world();
    EXPECT_EQ(qa_step(w, call("Lookup", {"major"})).observation, kNoPassageYet);

    auto r = qa_step(w, call("Retrieve", {"gary harrison"}));
    EXPECT_EQ(r.observation.rfind("Gary Steven Harrison", 0), 0u);
    EXPECT_FALSE(r.done);

    auto miss = qa_step(w, call("Retrieve", {"Bryan"}));
    EXPECT_NE(miss.observation.find("Could not find [Bryan]"), std::string::npos);
    EXPECT_NE(miss.observation.find("'Bryan White'"), std::string::npos);

    auto s = qa_step(w, call("Search", {"country music singer"}));
    EXPECT_EQ(s.observation, "Bryan Shelton White is an American country music singer.");
    EXPECT_EQ(qa_step(w, call("Search", {"quantum chromodynamics"})).observation,
              "No results found for [quantum chromodynamics].");

    qa_step(w, call("Retrieve", {"Gary Harrison"}));
    auto l1 = qa_step(w, call("Lookup", {"major-label"}));
    EXPECT_EQ(l1.observation.rfind("(Result 1 / 2)", 0), 0u);
    auto l2 = qa_step(w, call("Lookup", {"major-label"}));
    EXPECT_EQ(l2.observation.rfind("(Result 2 / 2)", 0), 0u);
    EXPECT_EQ(qa_step(w, call("Lookup", {"major-label"})).observation, "No more results.");

    auto f = qa_step(w, call("Finish", {"300"}));
    EXPECT_TRUE(f.done);
    EXPECT_EQ(w.answer, "300");
}

TEST(QaWorld, EnvironmentOutcome)
{
    auto sc = Scenario {"q", "Q?", small_world(), {}};
    auto env = make_environment(sc);
    env->step(call("Finish", {"over 300"}));
    auto out = env->outcome();
    EXPECT_NEAR(out.reward, f1_score("over 300", "300"), 1e-12);
    EXPECT_FALSE(out.success);
    EXPECT_EQ(out.answer, "over 300");
}

TEST(Household, ObjectClass)
{
    EXPECT_EQ(object_class_of("apple 1"), "apple");
    EXPECT_EQ(object_class_of("alarm clock 12"), "alarm clock");
    EXPECT_EQ(object_class_of("desklamp"), "desklamp");
}

TEST(Household, PreconditionsLeaveWorldUnchanged)
{
    auto sc = load_scenarios(data_path("scenarios/alfworld_clean.jsonl")).front();
    const auto& world = std::get<HouseholdWorld>(sc.world);

    auto [obs, after] = household_step(world, call("Take", {"apple 1", "countertop 1"}));
    EXPECT_EQ(obs, kNothingHappens);
    EXPECT_EQ(after, world);

    auto [obs2, there] = household_step(world, call("Goto", {"countertop 1"}));
    EXPECT_EQ(obs2, "You arrive at countertop 1. On the countertop 1, you see a apple 1.");
    auto [obs3, holding] = household_step(there, call("Take", {"apple 1", "countertop 1"}));
    EXPECT_EQ(obs3, "You pick up the apple 1 from the countertop 1.");
    EXPECT_EQ(holding.inventory, std::vector<std::string> {"apple 1"});

    auto [obs4, unchanged] = household_step(holding, call("Clean", {"apple 1", "countertop 1"}));
    EXPECT_EQ(obs4, kNothingHappens);
    EXPECT_EQ(unchanged, holding);
    EXPECT_EQ(household_step(world, call("Goto", {"moon 1"})).first, kNothingHappens);
}

TEST(Household, GoldScriptsReachGoals)
{
    for (const auto& kind: household_kinds())
        for (const auto& sc: load_scenarios(data_path("scenarios/alfworld_" + kind + ".jsonl")))
        {
            auto kb = load_kb(data_path("kb/alfworld_" + kind + ".kb.json"));
            auto env = make_environment(sc, &kb);
            auto done = false;
            for (const auto& line: sc.gold_script)
            {
                auto parsed = parse_action(line, kb);
                ASSERT_TRUE(std::holds_alternative<ActionInvocation>(parsed)) << line;
                auto r = env->step(std::get<ActionInvocation>(parsed));
                EXPECT_NE(r.observation, kNothingHappens) << sc.task_id << ": " << line;
                done = r.done;
            }
            EXPECT_TRUE(done) << sc.task_id;
            EXPECT_TRUE(env->outcome().success) << sc.task_id;
            EXPECT_DOUBLE_EQ(env->outcome().reward, 1.0);
        }
}

// Property: objects are never created or destroyed by any action sequence.
TEST(Household, ObjectConservation)
{
    std::mt19937 rng(3);
    for (const auto& kind: household_kinds())
        for (const auto& sc: load_scenarios(data_path("scenarios/alfworld_" + kind + ".jsonl")))
        {
            auto world = std::get<HouseholdWorld>(sc.world);
            auto census = [](const HouseholdWorld& w) {
                auto all = w.inventory;
                for (const auto& [name, r]: w.receptacles)
                    all.insert(all.end(), r.contents.begin(), r.contents.end());
                std::sort(all.begin(), all.end());
                return all;
            };
            auto before = census(world);
            auto receptacles = std::vector<std::string> {};
            for (const auto& [name, r]: world.receptacles)
                receptacles.push_back(name);
            auto objects = std::vector<std::string> {};
            for (const auto& [name, o]: world.objects)
                objects.push_back(name);
            const std::vector<std::string> verbs {"Goto", "Open", "Take", "Put", "Clean", "Heat", "Cool", "Use"};
            for (int i = 0; i < 400; ++i)
            {
                auto verb = verbs[rng() % verbs.size()];
                auto r = receptacles[rng() % receptacles.size()];
                auto args = (verb == "Goto" || verb == "Open" || verb == "Use")
                                ? std::vector<std::string> {r}
                                : std::vector<std::string> {objects[rng() % objects.size()], r};
                world = household_step(world, call(verb, args)).second;
                ASSERT_EQ(census(world), before) << sc.task_id << " after " << verb;
                ASSERT_LE(world.inventory.size(), 1u);
            }
        }
}

TEST(Scenarios, MalformedInput)
{
    EXPECT_THROW(scenario_from_json(Json::parse(R"({"type": "qa"})")), Error);
    EXPECT_THROW(scenario_from_json(Json::parse(R"({"type": "spaceship", "task_id": "x"})")), Error);
    EXPECT_THROW(load_scenarios("/nonexistent.jsonl"), Error);
    EXPECT_EQ(goal_kind_from_string("picktwo"), GoalKind::PickTwo);
    EXPECT_EQ(goal_kind_from_string("Clean"), GoalKind::Clean);
    EXPECT_THROW(goal_kind_from_string("juggle"), Error);
}
