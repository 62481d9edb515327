// SPDX-License-Identifier: Apache-2.0
#include "knowagent/validator.hpp"

#include "knowagent/error.hpp"

#include <algorithm>
#include <set>

namespace knowagent
{

namespace
{

bool paths_equal(const std::vector<ActionInvocation>& declared, const std::vector<ActionInvocation>& expected,
                 PathComparison mode)
{
    if (declared.size() != expected.size())
        return false;
    for (size_t i = 0; i < declared.size(); ++i)
    {
        if (declared[i].name != expected[i].name)
            return false;
        if (mode == PathComparison::Strict && declared[i].args != expected[i].args)
            return false;
    }
    return true;
}

double ratio(size_t num, size_t den)
{
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

std::string_view to_string(StepFlag flag)
{
    switch (flag)
    {
        case StepFlag::ParseError: return "parse_error";
        case StepFlag::InvalidAction: return "invalid_action";
        case StepFlag::MisorderedAction: return "misordered_action";
        case StepFlag::PathMismatch: return "path_mismatch";
    }
    return "unknown";
}

bool StepVerdict::has(StepFlag flag) const
{
    return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

ValidationReport validate_trajectory(const ActionKnowledge& kb, const Trajectory& traj, const ValidationOptions& options)
{
    auto report = ValidationReport {};
    auto previous = std::string(kStart);

    for (size_t t = 0; t < traj.steps.size(); ++t)
    {
        const auto& step = traj.steps[t];
        auto verdict = StepVerdict {.index = step.index, .flags = {}};

        if (!step.parsed())
        {
            verdict.flags.push_back(StepFlag::ParseError);
            ++report.parse_errors;
            report.verdicts.push_back(std::move(verdict));
            continue;
        }
        ++report.actions;

        const auto* spec = kb.find_action(step.action.name);
        if (!spec || spec->arity() != step.action.args.size())
            verdict.flags.push_back(StepFlag::InvalidAction);
        if (spec)
        {
            if (!is_valid_transition(kb, previous, step.action.name))
                verdict.flags.push_back(StepFlag::MisorderedAction);
            previous = step.action.name;
        }
        if (!paths_equal(step.action_path, canonical_path(traj, t), options.path_comparison))
            verdict.flags.push_back(StepFlag::PathMismatch);

        report.invalid += verdict.has(StepFlag::InvalidAction) ? 1 : 0;
        report.misordered += verdict.has(StepFlag::MisorderedAction) ? 1 : 0;
        report.path_mismatches += verdict.has(StepFlag::PathMismatch) ? 1 : 0;
        report.verdicts.push_back(std::move(verdict));
    }

    report.invalid_rate = ratio(report.invalid, report.actions);
    report.misordered_rate = ratio(report.misordered, report.actions);
    report.clean = std::all_of(report.verdicts.begin(), report.verdicts.end(), [](const auto& v) { return v.clean(); });
    return report;
}

AggregateRates compute_rates(std::span<const ValidationReport> reports)
{
    if (reports.empty())
        throw Error(ErrorCode::EmptyInput, "compute_rates needs at least one report");

    auto agg = AggregateRates {};
    for (const auto& r: reports)
    {
        ++agg.trajectories;
        agg.actions += r.actions;
        agg.invalid += r.invalid;
        agg.misordered += r.misordered;
        agg.path_mismatches += r.path_mismatches;
        agg.parse_errors += r.parse_errors;
        agg.flagged_trajectories += (r.invalid + r.misordered) > 0 ? 1 : 0;
    }
    agg.invalid_rate = ratio(agg.invalid, agg.actions);
    agg.misordered_rate = ratio(agg.misordered, agg.actions);
    agg.flagged_trajectory_rate = ratio(agg.flagged_trajectories, agg.trajectories);
    return agg;
}

Trajectory trajectory_from_names(const ActionKnowledge& kb, const ActionSequence& names)
{
    auto traj = Trajectory {};
    traj.task_id = "enumerated";
    for (size_t i = 0; i < names.size(); ++i)
    {
        const auto* spec = kb.find_action(names[i]);
        auto args = std::vector<std::string>(spec ? spec->arity() : 0, "x");
        auto step = Step {};
        step.index = i;
        step.action_path = canonical_path(traj, i);
        step.action = ActionInvocation {.name = names[i], .args = std::move(args), .raw = {}};
        traj.steps.push_back(std::move(step));
    }
    return traj;
}

bool oracle_equivalence(const ActionKnowledge& kb, size_t max_len, const TrajectoryValidator& validator, size_t budget)
{
    auto validate = validator ? validator : TrajectoryValidator([](const ActionKnowledge& k, const Trajectory& t) {
        return validate_trajectory(k, t, ValidationOptions {.path_comparison = PathComparison::NamesOnly});
    });

    auto enumerated = enumerate_paths(kb, max_len, budget);
    auto valid = std::set<ActionSequence>(enumerated.begin(), enumerated.end());

    auto names = std::vector<std::string> {};
    for (const auto& a: kb.actions())
        names.push_back(a.name);

    size_t total = 0;
    size_t layer = 1;
    for (size_t len = 1; len <= max_len; ++len)
    {
        layer *= names.size();
        total += layer;
        if (total > budget)
            throw Error(ErrorCode::BudgetExceeded, "oracle equivalence would check more than " + std::to_string(budget) + " sequences");
    }

    auto agree = true;
    auto current = std::vector<ActionSequence> {ActionSequence {}};
    for (size_t len = 1; len <= max_len; ++len)
    {
        auto next = std::vector<ActionSequence> {};
        for (const auto& prefix: current)
            for (const auto& name: names)
            {
                auto seq = prefix;
                seq.push_back(name);
                auto clean = validate(kb, trajectory_from_names(kb, seq)).clean;
                if (clean != valid.contains(seq))
                    agree = false;
                next.push_back(std::move(seq));
            }
        current = std::move(next);
    }
    return agree;
}

Json to_json(const ValidationReport& report)
{
    auto verdicts = Json::array();
    for (const auto& v: report.verdicts)
    {
        auto flags = Json::array();
        for (auto f: v.flags)
            flags.push_back(to_string(f));
        verdicts.push_back(Json {{"index", v.index}, {"flags", std::move(flags)}});
    }
    auto doc = Json::object();
    doc["clean"] = report.clean;
    doc["actions"] = report.actions;
    doc["invalid"] = report.invalid;
    doc["misordered"] = report.misordered;
    doc["path_mismatches"] = report.path_mismatches;
    doc["parse_errors"] = report.parse_errors;
    doc["invalid_rate"] = report.invalid_rate;
    doc["misordered_rate"] = report.misordered_rate;
    doc["verdicts"] = std::move(verdicts);
    return doc;
}

Json to_json(const AggregateRates& rates)
{
    auto doc = Json::object();
    doc["trajectories"] = rates.trajectories;
    doc["actions"] = rates.actions;
    doc["invalid"] = rates.invalid;
    doc["misordered"] = rates.misordered;
    doc["path_mismatches"] = rates.path_mismatches;
    doc["parse_errors"] = rates.parse_errors;
    doc["invalid_rate"] = rates.invalid_rate;
    doc["misordered_rate"] = rates.misordered_rate;
    doc["flagged_trajectories"] = rates.flagged_trajectories;
    doc["flagged_trajectory_rate"] = rates.flagged_trajectory_rate;
    return doc;
}

} // namespace knowagent
