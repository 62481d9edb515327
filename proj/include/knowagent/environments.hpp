// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/trajectory.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace knowagent
{

// --- metrics ---------------------------------------------------------------------

/// Lowercase, punctuation replaced by spaces, articles a/an/the dropped, whitespace split.
std::vector<std::string> normalize_answer_tokens(std::string_view s);

/// Token-level F1 over normalized multisets; 0 when either side has no tokens.
double f1_score(std::string_view prediction, std::string_view gold);

struct StepResult
{
    std::string observation;
    bool done = false;
};

// --- retrieval QA world ------------------------------------------------------------

struct CorpusEntry
{
    std::string title;
    std::vector<std::vector<std::string>> paragraphs; // each paragraph is a sentence list
};

struct QaWorld
{
    std::vector<CorpusEntry> corpus;
    std::string gold_answer;

    // Last passage successfully found by Search or Retrieve, and the Lookup cursor into it.
    std::optional<std::vector<std::string>> last_passage;
    std::string lookup_keyword;
    size_t lookup_cursor = 0;

    std::optional<std::string> answer;
};

inline constexpr std::string_view kNoPassageYet = "No passage has been found yet. Use Search or Retrieve first.";

/// Retrieve / Search / Lookup / Finish semantics over a desk-scale corpus.
/// Lookup before any passage returns kNoPassageYet as the observation.
StepResult qa_step(QaWorld& world, const ActionInvocation& action);

// --- household text world ----------------------------------------------------------

enum class GoalKind
{
    Pick,
    Light,
    Clean,
    Heat,
    Cool,
    PickTwo,
};

std::string_view to_string(GoalKind kind);
GoalKind goal_kind_from_string(std::string_view s);

struct TaskGoal
{
    GoalKind kind = GoalKind::Pick;
    std::string object_class;       // e.g. "apple"
    std::string target_receptacle;  // receptacle name ("diningtable 1") or class ("diningtable")

    bool operator==(const TaskGoal&) const = default;
};

struct Receptacle
{
    bool openable = false;
    bool open = true;
    std::vector<std::string> contents;
    std::vector<std::string> affords; // "clean", "heat", "cool", "light"

    bool operator==(const Receptacle&) const = default;
};

struct ObjectState
{
    bool clean = false;
    bool hot = false;
    bool cold = false;
    bool lit = false; // examined under a light source

    bool operator==(const ObjectState&) const = default;
};

struct HouseholdWorld
{
    std::map<std::string, Receptacle> receptacles;
    std::map<std::string, ObjectState> objects;
    std::optional<std::string> agent_at;
    std::vector<std::string> inventory; // capacity 1
    TaskGoal goal;
    // Action name -> named precondition predicates checked before the effect applies.
    std::map<std::string, std::vector<std::string>> preconditions = default_preconditions();

    static std::map<std::string, std::vector<std::string>> default_preconditions();

    bool operator==(const HouseholdWorld&) const = default;
};

inline constexpr std::string_view kNothingHappens = "Nothing happens.";

/// Precondition names accepted in KB documents and HouseholdWorld::preconditions.
const std::vector<std::string>& known_preconditions();

/// `<class> <index>` -> `<class>`.
std::string object_class_of(std::string_view name);

/// Applies one action with precondition checks. Any failed precondition leaves the
/// world unchanged and yields kNothingHappens.
std::pair<std::string, HouseholdWorld> household_step(const HouseholdWorld& world, const ActionInvocation& action);

bool goal_check(const HouseholdWorld& world);

// --- scenarios and the episode-facing environment ------------------------------------

struct Scenario
{
    std::string task_id;
    std::string task_text;
    std::variant<QaWorld, HouseholdWorld> world;
    std::vector<std::string> gold_script; // raw action lines

    [[nodiscard]] bool is_qa() const { return std::holds_alternative<QaWorld>(world); }
};

Scenario scenario_from_json(const Json& doc);
std::vector<Scenario> load_scenarios(const std::string& path);

class Environment
{
public:
    virtual ~Environment() = default;

    virtual StepResult step(const ActionInvocation& action) = 0;
    [[nodiscard]] virtual Outcome outcome() const = 0;
};

/// A fresh environment for one episode. For household scenarios, preconditions
/// declared by the KB's action specs override the built-in ones.
std::unique_ptr<Environment> make_environment(const Scenario& scenario, const ActionKnowledge* kb = nullptr);

} // namespace knowagent
