// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/agent_runtime.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace knowagent
{

inline constexpr double kDefaultTau = 0.7;
inline constexpr double kDefaultEpsilon = 0.01;
inline constexpr size_t kDefaultMaxIterations = 4;

struct FilterDrop
{
    std::string task_id;
    std::string reason; // policy_error, parse_error, invalid_action, misordered_action, path_mismatch or outcome
};

struct FilterResult
{
    std::vector<Trajectory> kept;
    std::vector<FilterDrop> dropped;
};

/// Correct means reward >= tau: F1 for QA, 1/0 success for household.
bool is_correct(const Trajectory& traj, double tau);

/// Keeps correct trajectories whose validation report is clean. Idempotent.
FilterResult filter_trajectories(const std::vector<Trajectory>& trajectories, const ActionKnowledge& kb, double tau,
                                 const ValidationOptions& options = {});

/// Best-so-far trajectory per task plus every synthesized batch.
class TrajectoryStore
{
public:
    struct Entry
    {
        Trajectory trajectory;
        size_t iteration = 0;
    };

    /// Replaces the incumbent only when the newcomer has strictly fewer steps.
    /// Returns true when the newcomer was stored.
    bool offer(Trajectory traj, size_t iteration);

    void archive(size_t iteration, std::vector<Trajectory> trajectories);

    [[nodiscard]] const std::map<std::string, Entry>& best() const noexcept { return _best; }
    [[nodiscard]] const std::map<size_t, std::vector<Trajectory>>& archived() const noexcept { return _archive; }
    [[nodiscard]] bool empty() const noexcept { return _best.empty(); }
    [[nodiscard]] size_t size() const noexcept { return _best.size(); }
    [[nodiscard]] size_t total_steps() const;
    [[nodiscard]] std::map<std::string, size_t> path_lengths() const;

private:
    std::map<std::string, Entry> _best;
    std::map<size_t, std::vector<Trajectory>> _archive;
};

/// T_i = run_batch over the training tasks, archived under `iteration` when a store is given.
std::vector<Trajectory> synthesize(const PolicyClient& policy, const ActionKnowledge& kb, std::span<const Scenario> tasks,
                                   const EpisodeConfig& config, size_t parallelism = 1, TrajectoryStore* store = nullptr,
                                   size_t iteration = 0);

struct MergeStats
{
    FilterResult filter;
    size_t added = 0;    // tasks new to the store
    size_t replaced = 0; // incumbents displaced by a shorter trajectory
};

MergeStats filter_and_merge(const std::vector<Trajectory>& trajectories, TrajectoryStore& store, const ActionKnowledge& kb,
                            double tau, size_t iteration, const ValidationOptions& options = {});

struct TuningRecord
{
    std::string instruction;
    std::string input;
    std::string output;

    bool operator==(const TuningRecord&) const = default;
};

struct TuningDataset
{
    std::vector<TuningRecord> records;
    Json manifest;
};

/// One record per stored step. Throws Error(EmptyStore).
TuningDataset emit_tuning_dataset(const TrajectoryStore& store, const ActionKnowledge& kb);

/// Writes `<path>` as JSON Lines and `<path minus extension>.manifest.json`.
void write_tuning_dataset(const TuningDataset& dataset, const std::string& path);
std::vector<TuningRecord> read_tuning_dataset(const std::string& path);

using PolicyFactory = std::function<std::shared_ptr<PolicyClient>(const std::string&)>;

struct LoopConfig
{
    std::vector<Scenario> train; // D_0
    std::vector<Scenario> test;  // D_test
    double epsilon = kDefaultEpsilon;
    double tau = kDefaultTau;
    std::string tune_command;
    size_t max_iterations = kDefaultMaxIterations;
    std::string base_policy; // M_0
    std::string out_dir;
    EpisodeConfig episode;
    size_t parallelism = 1;
    PolicyFactory factory; // defaults to make_policy
};

struct IterationRecord
{
    size_t index = 0;
    std::string policy_id;   // M_i, used for synthesis
    std::string tuned_policy; // M_{i+1}, returned by the tune hook
    size_t synthesized = 0;
    size_t kept_after_filter = 0;
    size_t merged_total = 0;
    double test_perf = 0.0;  // perf(M_{i+1})
    double delta_perf = 0.0; // perf(M_{i+1}) - perf(M_i)
};

struct LoopResult
{
    double base_perf = 0.0;
    std::vector<IterationRecord> iterations;
    std::string halt_reason; // "delta<=epsilon" or "max_iterations"
    size_t tune_invocations = 0;
    std::string final_policy;
};

/// Runs the tune hook `<cmd> --dataset <p> --base-model <id> --out <dir>` and returns
/// the last line it prints. Throws Error(TuneHookMissing) or Error(TuneHookFailure).
std::string run_tune_hook(const std::string& command, const std::string& dataset, const std::string& base_model,
                          const std::string& out_dir, size_t iteration);

/// Synthesize, filter/merge, emit, tune, evaluate; stops when the gain on the test
/// tasks is at most epsilon or after max_iterations tune calls. Artifacts go to
/// `<out_dir>/iterations/<i>/`.
LoopResult self_learning_loop(const ActionKnowledge& kb, const LoopConfig& config);

Json to_json(const IterationRecord& record);
Json to_json(const LoopResult& result);

/// Aligned plain-text table: iteration, kept, merged, perf, delta.
std::string summary_table(const LoopResult& result);

} // namespace knowagent
