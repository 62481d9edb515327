// SPDX-License-Identifier: Apache-2.0
#include "knowagent/error.hpp"
#include "knowagent/self_learning.hpp"
#include "knowagent/text.hpp"

#include "../support/test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace knowagent;
using namespace knowagent::testing;
namespace fs = std::filesystem;

namespace
{

const ActionKnowledge& hotpot()
{
    static const auto kb = load_kb(data_path("kb/hotpotqa.kb.json"));
    return kb;
}

Trajectory solved(const std::string& task, const std::vector<std::string>& lines, double reward = 1.0)
{
    auto t = trajectory_from_lines(hotpot(), lines);
    t.task_id = task;
    t.task_text = "Question " + task;
    for (auto& s: t.steps)
        s.observation = "obs";
    t.outcome.reward = reward;
    t.outcome.success = reward == 1.0;
    t.terminated_by = Termination::TerminalAction;
    return t;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try
    {
        f();
    }
    catch (const Error& e)
    {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::Usage;
}

std::string write_script(const fs::path& dir, const std::string& name, const std::string& body)
{
    auto path = dir / name;
    std::ofstream(path) << "#!/usr/bin/env bash\n" << body;
    fs::permissions(path, fs::perms::owner_all);
    return path.string();
}

} // namespace

TEST(Filter, DropReasons)
{
    auto policyError = solved("a", {"Search[x]"});
    policyError.terminated_by = Termination::PolicyError;
    auto parseError = solved("b", {"Search[x]", "Finish[y]"});
    parseError.steps[0].parse_error = ParseFailure {};
    auto invalid = solved("c", {"Search[x]", "Grab[y]", "Finish[y]"});
    auto misordered = solved("d", {"Lookup[x]", "Finish[y]"});
    auto mismatch = solved("e", {"Search[x]", "Finish[y]"});
    mismatch.steps[1].action_path.pop_back();
    auto wrong = solved("f", {"Search[x]", "Finish[y]"}, 0.5);
    auto good = solved("g", {"Search[x]", "Finish[y]"}, 0.8);

    auto result = filter_trajectories({policyError, parseError, invalid, misordered, mismatch, wrong, good}, hotpot(), 0.7);
    ASSERT_EQ(result.kept.size(), 1u);
    EXPECT_EQ(result.kept[0].task_id, "g");
    auto reasons = std::vector<std::string> {};
    for (const auto& d: result.dropped)
        reasons.push_back(d.task_id + ":" + d.reason);
    EXPECT_EQ(reasons, (std::vector<std::string> {"a:policy_error", "b:parse_error", "c:invalid_action",
                                                  "d:misordered_action", "e:path_mismatch", "f:outcome"}));
}

TEST(Filter, Idempotent)
{
    auto batch = std::vector<Trajectory> {solved("a", {"Search[x]", "Finish[y]"}), solved("b", {"Lookup[x]"}),
                                          solved("c", {"Retrieve[x]", "Finish[y]"}, 0.2),
                                          solved("d", {"Retrieve[x]", "Lookup[k]", "Finish[y]"})};
    auto once = filter_trajectories(batch, hotpot(), 0.7);
    auto twice = filter_trajectories(once.kept, hotpot(), 0.7);
    EXPECT_EQ(once.kept, twice.kept);
    EXPECT_TRUE(twice.dropped.empty());
    EXPECT_TRUE(is_correct(batch[0], 0.7));
    EXPECT_FALSE(is_correct(batch[2], 0.7));
}

TEST(Store, KeepsShortestPerTask)
{
    auto store = TrajectoryStore {};
    EXPECT_TRUE(store.offer(solved("q", {"Search[a]", "Search[b]", "Lookup[c]", "Search[a]", "Finish[d]"}), 0));
    EXPECT_TRUE(store.offer(solved("q", {"Search[a]", "Lookup[c]", "Finish[d]"}), 1));
    EXPECT_FALSE(store.offer(solved("q", {"Search[a]", "Search[b]", "Finish[d]"}), 2));
    EXPECT_FALSE(store.offer(solved("q", {"Search[a]", "Search[b]", "Lookup[c]", "Search[a]", "Finish[d]"}), 3));
    EXPECT_EQ(store.path_lengths().at("q"), 3u);
    EXPECT_EQ(store.best().at("q").iteration, 1u);
    store.offer(solved("r", {"Retrieve[a]", "Finish[b]"}), 3);
    EXPECT_EQ(store.total_steps(), 5u);
    EXPECT_EQ(store.size(), 2u);
}

TEST(Merge, CountsAddedAndReplaced)
{
    auto store = TrajectoryStore {};
    auto first = filter_and_merge({solved("a", {"Search[x]", "Lookup[k]", "Finish[y]"}), solved("b", {"Lookup[x]"})}, store,
                                  hotpot(), 0.7, 0);
    EXPECT_EQ(first.added, 1u);
    EXPECT_EQ(first.filter.dropped.size(), 1u);
    auto second = filter_and_merge({solved("a", {"Search[x]", "Finish[y]"}), solved("c", {"Search[x]", "Finish[y]"})},
                                   store, hotpot(), 0.7, 1);
    EXPECT_EQ(second.added, 1u);
    EXPECT_EQ(second.replaced, 1u);
    EXPECT_EQ(store.path_lengths(), (std::map<std::string, size_t> {{"a", 2}, {"c", 2}}));
}

TEST(Dataset, OneRecordPerStoredStep)
{
    auto store = TrajectoryStore {};
    store.offer(solved("a", {"Search[x]", "Lookup[k]", "Finish[y]"}), 0);
    store.offer(solved("b", {"Retrieve[z]", "Finish[w]"}), 1);
    auto ds = emit_tuning_dataset(store, hotpot());
    ASSERT_EQ(ds.records.size(), 5u);
    auto system = render_system_prompt(build_template(hotpot()));
    for (const auto& r: ds.records)
        EXPECT_EQ(r.instruction, system);
    EXPECT_EQ(ds.records[0].input, "Question: Question a");
    EXPECT_EQ(ds.records[0].output, "ActionPath 1: Start\nThought 1: step\nAction 1: Search[x]");
    EXPECT_EQ(ds.records[1].input,
              "Question: Question a\nActionPath 1: Start\nThought 1: step\nAction 1: Search[x]\nObservation 1: obs");
    EXPECT_EQ(ds.manifest["records"], 5);
    EXPECT_EQ(ds.manifest["trajectories"], 2);

    auto dir = scratch_dir("dataset-emit");
    write_tuning_dataset(ds, (dir / "d.jsonl").string());
    EXPECT_TRUE(fs::exists(dir / "d.manifest.json"));
    EXPECT_EQ(read_tuning_dataset((dir / "d.jsonl").string()), ds.records);
    auto lines = text::split_lines(text::read_file((dir / "d.jsonl").string()));
    EXPECT_EQ(std::count_if(lines.begin(), lines.end(), [](const auto& l) { return !l.empty(); }), 5);

    EXPECT_EQ(code_of([] { emit_tuning_dataset(TrajectoryStore {}, hotpot()); }), ErrorCode::EmptyStore);
}

TEST(TuneHook, ArgumentsAndResult)
{
    auto dir = scratch_dir("tune-hook");
    auto data = dir / "d.jsonl";
    std::ofstream(data) << "{}\n";
    auto hook = write_script(dir, "hook.sh", "echo \"$@\" > \"" + (dir / "args.txt").string() + "\"\necho noise\necho model-v2\n\n");
    EXPECT_EQ(run_tune_hook(hook, data.string(), "model v1", (dir / "out").string(), 0), "model-v2");
    auto args = text::read_file((dir / "args.txt").string());
    EXPECT_EQ(args, "--dataset " + data.string() + " --base-model model v1 --out " + (dir / "out").string() + "\n");
}

TEST(TuneHook, Failures)
{
    auto dir = scratch_dir("tune-hook-fail");
    EXPECT_EQ(code_of([&] { run_tune_hook((dir / "absent.sh").string(), "d", "m", dir.string(), 0); }),
              ErrorCode::TuneHookMissing);
    EXPECT_EQ(code_of([&] { run_tune_hook("no-such-tuner-anywhere", "d", "m", dir.string(), 0); }),
              ErrorCode::TuneHookMissing);
    auto failing = write_script(dir, "fail.sh", "echo broken >&2\nexit 4\n");
    try
    {
        run_tune_hook(failing, "d", "m", dir.string(), 3);
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_EQ(e.code(), ErrorCode::TuneHookFailure);
        EXPECT_NE(std::string(e.what()).find("iteration 3"), std::string::npos);
    }
    auto silent = write_script(dir, "silent.sh", "exit 0\n");
    EXPECT_EQ(code_of([&] { run_tune_hook(silent, "d", "m", dir.string(), 0); }), ErrorCode::TuneHookFailure);
}

namespace
{

LoopConfig fixture_loop(const std::string& name)
{
    auto config = LoopConfig {};
    config.train = load_scenarios(fixture_path("selflearn/train.jsonl"));
    config.test = load_scenarios(fixture_path("selflearn/test.jsonl"));
    config.tune_command = fixture_path("selflearn/tune_hook.sh");
    config.base_policy = "scripted:" + fixture_path("selflearn/m0.json");
    config.out_dir = scratch_dir(name).string();
    return config;
}

} // namespace

TEST(Loop, HaltsOnSmallGain)
{
    auto config = fixture_loop("loop-halt");
    config.epsilon = 0.03;
    auto result = self_learning_loop(hotpot(), config);
    EXPECT_EQ(result.halt_reason, "delta<=epsilon");
    EXPECT_EQ(result.tune_invocations, 2u);
    ASSERT_EQ(result.iterations.size(), 2u);
    EXPECT_NEAR(result.base_perf, 0.40, 1e-9);
    EXPECT_NEAR(result.iterations[0].test_perf, 0.55, 1e-9);
    EXPECT_NEAR(result.iterations[1].test_perf, 0.57, 1e-9);
    EXPECT_EQ(result.iterations[0].kept_after_filter, 3u);
    EXPECT_EQ(result.iterations[1].kept_after_filter, 1u);
    EXPECT_EQ(result.final_policy, "scripted:" + fixture_path("selflearn/m2.json"));

    auto root = fs::path(config.out_dir);
    for (auto f: {"trajectories.jsonl", "dataset.jsonl", "dataset.manifest.json", "report.json", "test_trajectories.jsonl"})
        EXPECT_TRUE(fs::exists(root / "iterations" / "1" / f)) << f;
    EXPECT_TRUE(fs::exists(root / "summary.json"));
    auto table = summary_table(result);
    EXPECT_NE(table.find("halt: delta<=epsilon after 2 tune invocation(s)"), std::string::npos);
    EXPECT_NE(table.find("0.5500"), std::string::npos);
}

TEST(Loop, StopsAtMaxIterations)
{
    auto config = fixture_loop("loop-max");
    config.epsilon = -1.0;
    config.max_iterations = 3;
    auto result = self_learning_loop(hotpot(), config);
    EXPECT_EQ(result.halt_reason, "max_iterations");
    EXPECT_EQ(result.tune_invocations, 3u);
    ASSERT_EQ(result.iterations.size(), 3u);
    EXPECT_EQ(result.iterations[2].merged_total, 3u);

    // Stored path lengths per iteration never grow.
    auto lengths = std::vector<size_t> {};
    for (size_t i = 0; i < 3; ++i)
    {
        auto records = read_tuning_dataset((fs::path(config.out_dir) / "iterations" / std::to_string(i) / "dataset.jsonl").string());
        lengths.push_back(records.size());
    }
    EXPECT_EQ(lengths, (std::vector<size_t> {15, 13, 10}));
}

TEST(Loop, MissingHook)
{
    auto config = fixture_loop("loop-missing-hook");
    config.tune_command = "/nonexistent/tune";
    EXPECT_EQ(code_of([&] { self_learning_loop(hotpot(), config); }), ErrorCode::TuneHookMissing);
}

TEST(Loop, HookFailureKeepsEarlierArtifacts)
{
    auto config = fixture_loop("loop-hook-fails");
    config.epsilon = 0.03;
    auto counter = fs::path(config.out_dir) / "calls";
    auto hooks = scratch_dir("loop-hook-fails-bin");
    config.tune_command = write_script(hooks, "flaky.sh",
                                       "n=$(cat '" + counter.string() + "' 2>/dev/null || echo 0)\n"
                                       "echo $((n + 1)) > '" + counter.string() + "'\n"
                                       "[ \"$n\" = 0 ] || exit 9\n"
                                       "echo scripted:" + fixture_path("selflearn/m1.json") + "\n");
    try
    {
        self_learning_loop(hotpot(), config);
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_EQ(e.code(), ErrorCode::TuneHookFailure);
        EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
    }
    auto first = fs::path(config.out_dir) / "iterations" / "0";
    for (auto f: {"trajectories.jsonl", "dataset.jsonl", "report.json", "test_trajectories.jsonl"})
        EXPECT_TRUE(fs::exists(first / f)) << f;
    EXPECT_TRUE(fs::exists(fs::path(config.out_dir) / "iterations" / "1" / "dataset.jsonl"));
}
