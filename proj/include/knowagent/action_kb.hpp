// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

using Json = nlohmann::ordered_json;

/// Pseudo-action every planning path starts from. Never emitted by the agent
/// and never counted in path length.
inline constexpr std::string_view kStart = "Start";

enum class SyntaxStyle
{
    Bracket,    // Search[topic]
    VerbPhrase, // take apple 1 from countertop 1
};

enum class PromptLayout
{
    Graph,      // node listing `From:(To, ...)` with indented blocks
    Guidelines, // verbatim implication lines, numbered action list
};

struct ArgSlot
{
    std::string name;
    std::string description;

    bool operator==(const ArgSlot&) const = default;
};

struct ActionSpec
{
    std::string name;
    std::vector<ArgSlot> arg_slots;
    std::string definition;
    SyntaxStyle syntax_style = SyntaxStyle::Bracket;
    // Slot-bearing surface templates for verb-phrase actions, e.g.
    // "take {object} from {receptacle}". The first one is the canonical write form.
    std::vector<std::string> patterns;
    // Named world predicates the household environment checks before applying the action.
    std::vector<std::string> preconditions;

    [[nodiscard]] size_t arity() const noexcept { return arg_slots.size(); }

    bool operator==(const ActionSpec&) const = default;
};

struct ActionRule
{
    std::string from;
    std::vector<std::string> to;

    bool operator==(const ActionRule&) const = default;
};

/// Text material consumed by the prompt renderer. Stored in the KB document so the
/// knowledge and the way it is explained to the model travel together.
struct PromptMaterial
{
    PromptLayout layout = PromptLayout::Graph;
    std::vector<std::string> preamble;
    // Verbatim rule lines (guidelines layout). Empty means derive from the adjacency rules.
    std::vector<std::string> rule_lines;
    std::string interpretation_header;
    std::vector<std::string> interpretation_lines;
    std::string definitions_header;
    std::string principle;
    std::string demonstrations_header;
    std::vector<std::string> demonstrations;
    std::string demonstrations_footer;
    std::string task_prefix;

    bool operator==(const PromptMaterial&) const = default;
};

/// Unchecked contents of a KB document. ActionKnowledge is the validated form.
struct KbDefinition
{
    std::string task_id;
    std::vector<ActionSpec> actions;
    std::vector<ActionRule> rules;
    std::vector<std::string> terminals;
    std::optional<PromptMaterial> prompt;

    bool operator==(const KbDefinition&) const = default;
};

struct InvariantResult
{
    std::string name;
    bool ok = true;
    std::string detail;
};

/// Evaluates every ActionKnowledge invariant without throwing. Used by load
/// (fail on the first violation) and by the distillation review checklist.
std::vector<InvariantResult> check_invariants(const KbDefinition& def);

/// Immutable, validated action knowledge automaton: actions plus permissible transitions.
class ActionKnowledge
{
public:
    /// Throws Error(InconsistentKb) naming the first failing invariant.
    explicit ActionKnowledge(KbDefinition def);

    [[nodiscard]] const std::string& task_id() const noexcept { return _def.task_id; }
    [[nodiscard]] const std::vector<ActionSpec>& actions() const noexcept { return _def.actions; }
    [[nodiscard]] const std::vector<ActionRule>& rules() const noexcept { return _def.rules; }
    [[nodiscard]] const std::vector<std::string>& terminals() const noexcept { return _def.terminals; }
    [[nodiscard]] const std::optional<PromptMaterial>& prompt() const noexcept { return _def.prompt; }
    [[nodiscard]] const KbDefinition& definition() const noexcept { return _def; }

    [[nodiscard]] const ActionSpec* find_action(std::string_view name) const;
    [[nodiscard]] bool is_terminal(std::string_view name) const;
    /// Declared successors of `from` (Start or an action); empty for unknown names.
    [[nodiscard]] const std::vector<std::string>& successors(std::string_view from) const;

    bool operator==(const ActionKnowledge& other) const { return _def == other._def; }

private:
    KbDefinition _def;
    std::map<std::string, size_t, std::less<>> _actionIndex;
    std::map<std::string, std::vector<std::string>, std::less<>> _successors;
};

/// Schema-level parse. Throws Error(MalformedDocument).
KbDefinition parse_kb_definition(const Json& doc);
Json to_json(const KbDefinition& def);

ActionKnowledge parse_kb(const Json& doc);
ActionKnowledge load_kb(const std::string& path);
Json to_json(const ActionKnowledge& kb);
void save_kb(const ActionKnowledge& kb, const std::string& path);

bool is_valid_transition(const ActionKnowledge& kb, std::string_view from, std::string_view to);

using ActionSequence = std::vector<std::string>;

inline constexpr size_t kDefaultEnumerationBudget = 100'000;

/// Every action-name sequence of length 1..max_len that starts after Start and only
/// follows permissible transitions. Sequences stop extending at terminals.
/// Throws Error(BudgetExceeded) once more than `budget` sequences would be produced.
std::vector<ActionSequence> enumerate_paths(const ActionKnowledge& kb, size_t max_len,
                                            size_t budget = kDefaultEnumerationBudget);

std::string_view to_string(SyntaxStyle style);
std::string_view to_string(PromptLayout layout);

} // namespace knowagent
