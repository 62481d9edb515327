// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/trajectory.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace knowagent
{

enum class StepFlag
{
    ParseError,
    InvalidAction,
    MisorderedAction,
    PathMismatch,
};

std::string_view to_string(StepFlag flag);

struct StepVerdict
{
    size_t index = 0;
    std::vector<StepFlag> flags; // in enum order; ParseError excludes the rest

    [[nodiscard]] bool has(StepFlag flag) const;
    [[nodiscard]] bool clean() const noexcept { return flags.empty(); }
};

enum class PathComparison
{
    Strict,    // names and args
    NamesOnly,
};

struct ValidationOptions
{
    PathComparison path_comparison = PathComparison::Strict;
};

struct ValidationReport
{
    std::vector<StepVerdict> verdicts;
    size_t actions = 0; // parsed steps; the rate denominator
    size_t invalid = 0;
    size_t misordered = 0;
    size_t path_mismatches = 0;
    size_t parse_errors = 0;
    double invalid_rate = 0.0;
    double misordered_rate = 0.0;
    bool clean = true;
};

/// Per step: invalid_action when the name is undeclared or the arity is wrong;
/// misordered_action when the transition from the previous declared action (Start
/// for the first) is not permitted; path_mismatch when the declared path differs
/// from canonical_path. Steps after a parse error are still transition-checked
/// against the last parsed action.
ValidationReport validate_trajectory(const ActionKnowledge& kb, const Trajectory& traj, const ValidationOptions& options = {});

struct AggregateRates
{
    size_t trajectories = 0;
    size_t actions = 0;
    size_t invalid = 0;
    size_t misordered = 0;
    size_t path_mismatches = 0;
    size_t parse_errors = 0;
    double invalid_rate = 0.0;    // invalid / actions, micro-averaged
    double misordered_rate = 0.0; // misordered / actions, micro-averaged
    size_t flagged_trajectories = 0;
    double flagged_trajectory_rate = 0.0; // per-trajectory view, for transparency
};

/// Throws Error(EmptyInput) on an empty list.
AggregateRates compute_rates(std::span<const ValidationReport> reports);

using TrajectoryValidator = std::function<ValidationReport(const ActionKnowledge&, const Trajectory&)>;

/// A trajectory executing `names` with dummy arguments of the declared arity and
/// correctly declared paths.
Trajectory trajectory_from_names(const ActionKnowledge& kb, const ActionSequence& names);

/// True iff, for every action-name sequence of length <= max_len, the validator calls it
/// clean exactly when enumerate_paths produces it. Throws Error(BudgetExceeded) when
/// the number of sequences to check exceeds `budget`.
bool oracle_equivalence(const ActionKnowledge& kb, size_t max_len, const TrajectoryValidator& validator = {},
                        size_t budget = kDefaultEnumerationBudget);

Json to_json(const ValidationReport& report);
Json to_json(const AggregateRates& rates);

} // namespace knowagent
