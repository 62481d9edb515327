// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace knowagent
{

struct ActionInvocation
{
    std::string name;
    std::vector<std::string> args;
    std::string raw; // surface form as emitted

    /// Structural equality (name and args); `raw` is ignored.
    [[nodiscard]] bool same_call(const ActionInvocation& other) const { return name == other.name && args == other.args; }

    bool operator==(const ActionInvocation&) const = default;
};

ActionInvocation start_invocation();

enum class ParseFailureKind
{
    MissingField,
    MalformedActionPath,
    UnknownActionSyntax,
};

std::string_view to_string(ParseFailureKind kind);

struct ParseFailure
{
    ParseFailureKind kind = ParseFailureKind::MissingField;
    std::string field; // "ActionPath", "Thought" or "Action"
    std::string detail;

    bool operator==(const ParseFailure&) const = default;
};

struct ParsedStep
{
    std::vector<ActionInvocation> action_path; // begins with Start
    std::string thought;
    ActionInvocation action;
};

using ParseResult = std::variant<ParsedStep, ParseFailure>;

struct Rejection
{
    std::string output;
    std::string reason;

    bool operator==(const Rejection&) const = default;
};

struct Step
{
    size_t index = 0;
    std::vector<ActionInvocation> action_path;
    std::string thought;
    ActionInvocation action;
    std::string observation;
    // Set when the model output could not be parsed; the raw text is kept in raw_output.
    std::optional<ParseFailure> parse_error;
    std::string raw_output;
    std::vector<Rejection> rejections;
    std::vector<std::string> warnings;

    [[nodiscard]] bool parsed() const noexcept { return !parse_error.has_value(); }

    bool operator==(const Step&) const = default;
};

enum class Termination
{
    TerminalAction,
    GoalReached,
    StepLimit,
    PolicyError,
};

std::string_view to_string(Termination t);

struct Outcome
{
    double reward = 0.0; // QA: F1; household: 1 on goal success, else 0
    bool success = false;
    std::optional<std::string> answer;

    bool operator==(const Outcome&) const = default;
};

struct Trajectory
{
    std::string task_id;
    std::string task_text;
    std::vector<Step> steps;
    Outcome outcome;
    Termination terminated_by = Termination::StepLimit;
    std::optional<std::string> error;

    [[nodiscard]] size_t retries() const;

    bool operator==(const Trajectory&) const = default;
};

// --- action surface forms -------------------------------------------------------

/// Parses one action invocation per the KB: bracket form `Name[arg]` is always
/// accepted; otherwise the verb-phrase templates of the KB's actions are tried in order.
std::variant<ActionInvocation, ParseFailure> parse_action(std::string_view text, const ActionKnowledge& kb);

/// Canonical written form: `Name[args]` for bracket actions, the first template for
/// verb-phrase actions, the raw text for actions the KB does not declare.
std::string format_action(const ActionInvocation& action, const ActionKnowledge& kb);

/// Path token: `Name[args]` (bracket) or `Name(args)` (verb-phrase); `Start` for the pseudo-action.
std::string format_path_token(const ActionInvocation& action, const ActionKnowledge& kb);
std::string format_path(const std::vector<ActionInvocation>& path, const ActionKnowledge& kb);
std::variant<std::vector<ActionInvocation>, ParseFailure> parse_path(std::string_view text, const ActionKnowledge& kb);

// --- step blocks ---------------------------------------------------------------

ParseResult parse_step_output(std::string_view text, const ActionKnowledge& kb, size_t index);

/// The `ActionPath/Thought/Action` block the model is expected to produce for `step`
/// (display index = step.index + 1). For unparsed steps this is the raw output.
std::string format_step_output(const Step& step, const ActionKnowledge& kb);

/// History text: for each step a newline, the step output block and
/// `Observation k: ...`. Empty for an empty trajectory.
std::string serialize_scratchpad(const Trajectory& traj, const ActionKnowledge& kb);
std::string serialize_scratchpad(const Trajectory& traj, const ActionKnowledge& kb, size_t upto);

/// Start followed by the actions of the parsed steps before `upto`: the path the
/// model should declare at step `upto`.
std::vector<ActionInvocation> canonical_path(const Trajectory& traj, size_t upto);

// --- persistence (JSON Lines, one trajectory per line) ----------------------------

Json to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& doc);
std::string to_jsonl(const std::vector<Trajectory>& trajectories);
void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_trajectories(const std::string& path);

} // namespace knowagent
