// SPDX-License-Identifier: Apache-2.0
#include "knowagent/action_kb.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>

namespace knowagent
{

namespace
{

const std::vector<std::string> kNoSuccessors {};

bool valid_identifier(std::string_view name)
{
    if (name.empty())
        return false;
    return std::none_of(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

[[noreturn]] void malformed(const std::string& what)
{
    throw Error(ErrorCode::MalformedDocument, what);
}

const Json& require(const Json& obj, std::string_view key, const std::string& where)
{
    auto it = obj.find(key);
    if (it == obj.end())
        malformed(where + ": missing field '" + std::string(key) + "'");
    return *it;
}

std::string require_string(const Json& obj, std::string_view key, const std::string& where)
{
    const auto& value = require(obj, key, where);
    if (!value.is_string())
        malformed(where + ": field '" + std::string(key) + "' must be a string");
    return value.get<std::string>();
}

std::string optional_string(const Json& obj, std::string_view key, const std::string& where)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return {};
    if (!it->is_string())
        malformed(where + ": field '" + std::string(key) + "' must be a string");
    return it->get<std::string>();
}

std::vector<std::string> string_array(const Json& value, const std::string& where)
{
    if (!value.is_array())
        malformed(where + " must be an array of strings");
    auto out = std::vector<std::string> {};
    for (const auto& item: value)
    {
        if (!item.is_string())
            malformed(where + " must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::vector<std::string> optional_string_array(const Json& obj, std::string_view key, const std::string& where)
{
    auto it = obj.find(key);
    if (it == obj.end())
        return {};
    return string_array(*it, where + "." + std::string(key));
}

SyntaxStyle parse_syntax_style(const std::string& value, const std::string& where)
{
    if (value == "bracket")
        return SyntaxStyle::Bracket;
    if (value == "verb_phrase")
        return SyntaxStyle::VerbPhrase;
    malformed(where + ": unknown syntax_style '" + value + "'");
}

PromptLayout parse_layout(const std::string& value)
{
    if (value.empty() || value == "graph")
        return PromptLayout::Graph;
    if (value == "guidelines")
        return PromptLayout::Guidelines;
    malformed("prompt: unknown layout '" + value + "'");
}

ActionSpec parse_action(const Json& item, size_t index)
{
    auto where = "actions[" + std::to_string(index) + "]";
    if (!item.is_object())
        malformed(where + " must be an object");

    auto spec = ActionSpec {};
    spec.name = require_string(item, "name", where);
    spec.definition = optional_string(item, "definition", where);
    spec.syntax_style = parse_syntax_style(require_string(item, "syntax_style", where), where);
    if (auto it = item.find("arg_slots"); it != item.end())
    {
        if (!it->is_array())
            malformed(where + ".arg_slots must be an array");
        for (const auto& slot: *it)
        {
            if (!slot.is_object())
                malformed(where + ".arg_slots entries must be objects");
            spec.arg_slots.push_back(ArgSlot {
                .name = require_string(slot, "slot_name", where + ".arg_slots"),
                .description = optional_string(slot, "description", where + ".arg_slots"),
            });
        }
    }
    spec.patterns = optional_string_array(item, "patterns", where);
    spec.preconditions = optional_string_array(item, "preconditions", where);
    if (spec.syntax_style == SyntaxStyle::VerbPhrase && spec.patterns.empty())
        malformed(where + ": verb_phrase action '" + spec.name + "' needs at least one pattern");
    return spec;
}

PromptMaterial parse_prompt(const Json& obj)
{
    if (!obj.is_object())
        malformed("prompt must be an object");
    auto p = PromptMaterial {};
    p.layout = parse_layout(optional_string(obj, "layout", "prompt"));
    p.preamble = optional_string_array(obj, "preamble", "prompt");
    p.rule_lines = optional_string_array(obj, "rule_lines", "prompt");
    p.interpretation_header = optional_string(obj, "interpretation_header", "prompt");
    p.interpretation_lines = optional_string_array(obj, "interpretation_lines", "prompt");
    p.definitions_header = optional_string(obj, "definitions_header", "prompt");
    p.principle = optional_string(obj, "principle", "prompt");
    p.demonstrations_header = optional_string(obj, "demonstrations_header", "prompt");
    p.demonstrations = optional_string_array(obj, "demonstrations", "prompt");
    p.demonstrations_footer = optional_string(obj, "demonstrations_footer", "prompt");
    p.task_prefix = optional_string(obj, "task_prefix", "prompt");
    return p;
}

Json prompt_to_json(const PromptMaterial& p)
{
    auto obj = Json::object();
    obj["layout"] = to_string(p.layout);
    obj["preamble"] = p.preamble;
    if (!p.rule_lines.empty())
        obj["rule_lines"] = p.rule_lines;
    obj["interpretation_header"] = p.interpretation_header;
    obj["interpretation_lines"] = p.interpretation_lines;
    obj["definitions_header"] = p.definitions_header;
    obj["principle"] = p.principle;
    obj["demonstrations_header"] = p.demonstrations_header;
    obj["demonstrations"] = p.demonstrations;
    obj["demonstrations_footer"] = p.demonstrations_footer;
    obj["task_prefix"] = p.task_prefix;
    return obj;
}

} // namespace

std::string_view to_string(SyntaxStyle style)
{
    return style == SyntaxStyle::Bracket ? "bracket" : "verb_phrase";
}

std::string_view to_string(PromptLayout layout)
{
    return layout == PromptLayout::Graph ? "graph" : "guidelines";
}

std::vector<InvariantResult> check_invariants(const KbDefinition& def)
{
    auto results = std::vector<InvariantResult> {};
    auto record = [&](std::string name, std::vector<std::string> problems) {
        results.push_back(InvariantResult {
            .name = std::move(name),
            .ok = problems.empty(),
            .detail = text::join(problems, "; "),
        });
    };

    auto names = std::set<std::string, std::less<>> {};
    {
        auto problems = std::vector<std::string> {};
        if (!valid_identifier(def.task_id))
            problems.push_back("task_id must be a non-empty identifier");
        record("task_id", std::move(problems));
    }
    {
        auto problems = std::vector<std::string> {};
        for (const auto& action: def.actions)
        {
            if (!valid_identifier(action.name))
                problems.push_back("action name '" + action.name + "' is empty or contains whitespace");
            else if (action.name == kStart)
                problems.push_back("'Start' is reserved for the pseudo-action");
            else if (!names.insert(action.name).second)
                problems.push_back("duplicate action '" + action.name + "'");
            auto slots = std::set<std::string> {};
            for (const auto& slot: action.arg_slots)
                if (!valid_identifier(slot.name) || !slots.insert(slot.name).second)
                    problems.push_back("action '" + action.name + "' has an empty or duplicate slot '" + slot.name + "'");
        }
        if (def.actions.empty())
            problems.push_back("no actions declared");
        record("action_names", std::move(problems));
    }

    auto adjacency = std::map<std::string, std::vector<std::string>, std::less<>> {};
    {
        auto problems = std::vector<std::string> {};
        auto seenKeys = std::set<std::string> {};
        for (const auto& rule: def.rules)
        {
            if (rule.from != kStart && !names.contains(rule.from))
                problems.push_back("rule key '" + rule.from + "' is neither Start nor a declared action");
            if (!seenKeys.insert(rule.from).second)
                problems.push_back("rule key '" + rule.from + "' appears twice");
            auto targets = std::set<std::string> {};
            for (const auto& to: rule.to)
            {
                if (!names.contains(to))
                    problems.push_back("rule " + rule.from + " -> " + to + " targets an undeclared action");
                if (!targets.insert(to).second)
                    problems.push_back("rule " + rule.from + " lists " + to + " twice");
            }
            adjacency[rule.from] = rule.to;
        }
        record("rules_declared", std::move(problems));
    }
    {
        auto problems = std::vector<std::string> {};
        if (def.terminals.empty())
            problems.push_back("no terminal actions declared");
        for (const auto& t: def.terminals)
        {
            if (!names.contains(t))
                problems.push_back("terminal '" + t + "' is not a declared action");
            else if (auto it = adjacency.find(t); it != adjacency.end() && !it->second.empty())
                problems.push_back("terminal '" + t + "' has successors");
        }
        record("terminals", std::move(problems));
    }

    {
        auto reached = std::set<std::string> {};
        auto queue = std::deque<std::string> {std::string(kStart)};
        while (!queue.empty())
        {
            auto node = queue.front();
            queue.pop_front();
            if (auto it = adjacency.find(node); it != adjacency.end())
                for (const auto& next: it->second)
                    if (names.contains(next) && reached.insert(next).second)
                        queue.push_back(next);
        }
        auto problems = std::vector<std::string> {};
        for (const auto& action: def.actions)
            if (!reached.contains(action.name))
                problems.push_back("'" + action.name + "' is unreachable from Start");
        record("reachable_from_start", std::move(problems));
    }
    {
        // Reverse search from the terminals.
        auto canFinish = std::set<std::string> {};
        for (const auto& t: def.terminals)
            if (names.contains(t))
                canFinish.insert(t);
        auto changed = true;
        while (changed)
        {
            changed = false;
            for (const auto& [from, targets]: adjacency)
            {
                if (canFinish.contains(from))
                    continue;
                if (std::any_of(targets.begin(), targets.end(), [&](const auto& t) { return canFinish.contains(t); }))
                {
                    canFinish.insert(from);
                    changed = true;
                }
            }
        }
        auto problems = std::vector<std::string> {};
        for (const auto& action: def.actions)
            if (!canFinish.contains(action.name))
                problems.push_back("'" + action.name + "' cannot reach a terminal");
        record("reaches_terminal", std::move(problems));
    }
    return results;
}

ActionKnowledge::ActionKnowledge(KbDefinition def): _def(std::move(def))
{
    for (const auto& result: check_invariants(_def))
        if (!result.ok)
            throw Error(ErrorCode::InconsistentKb, "invariant " + result.name + " violated: " + result.detail);

    for (size_t i = 0; i < _def.actions.size(); ++i)
        _actionIndex.emplace(_def.actions[i].name, i);
    for (const auto& rule: _def.rules)
        _successors.emplace(rule.from, rule.to);
}

const ActionSpec* ActionKnowledge::find_action(std::string_view name) const
{
    auto it = _actionIndex.find(name);
    return it == _actionIndex.end() ? nullptr : &_def.actions[it->second];
}

bool ActionKnowledge::is_terminal(std::string_view name) const
{
    return std::find(_def.terminals.begin(), _def.terminals.end(), name) != _def.terminals.end();
}

const std::vector<std::string>& ActionKnowledge::successors(std::string_view from) const
{
    auto it = _successors.find(from);
    return it == _successors.end() ? kNoSuccessors : it->second;
}

KbDefinition parse_kb_definition(const Json& doc)
{
    if (!doc.is_object())
        malformed("KB document must be a JSON object");

    auto def = KbDefinition {};
    def.task_id = require_string(doc, "task_id", "kb");

    const auto& actions = require(doc, "actions", "kb");
    if (!actions.is_array())
        malformed("kb: 'actions' must be an array");
    for (size_t i = 0; i < actions.size(); ++i)
        def.actions.push_back(parse_action(actions[i], i));

    const auto& rules = require(doc, "rules", "kb");
    if (!rules.is_object())
        malformed("kb: 'rules' must be an object of name -> array of names");
    for (const auto& [from, targets]: rules.items())
        def.rules.push_back(ActionRule {.from = from, .to = string_array(targets, "rules." + from)});

    def.terminals = string_array(require(doc, "terminals", "kb"), "terminals");
    if (auto it = doc.find("prompt"); it != doc.end())
        def.prompt = parse_prompt(*it);
    return def;
}

Json to_json(const KbDefinition& def)
{
    auto doc = Json::object();
    doc["task_id"] = def.task_id;
    auto actions = Json::array();
    for (const auto& a: def.actions)
    {
        auto item = Json::object();
        item["name"] = a.name;
        auto slots = Json::array();
        for (const auto& s: a.arg_slots)
            slots.push_back(Json {{"slot_name", s.name}, {"description", s.description}});
        item["arg_slots"] = std::move(slots);
        item["definition"] = a.definition;
        item["syntax_style"] = to_string(a.syntax_style);
        if (!a.patterns.empty())
            item["patterns"] = a.patterns;
        if (!a.preconditions.empty())
            item["preconditions"] = a.preconditions;
        actions.push_back(std::move(item));
    }
    doc["actions"] = std::move(actions);
    auto rules = Json::object();
    for (const auto& r: def.rules)
        rules[r.from] = r.to;
    doc["rules"] = std::move(rules);
    doc["terminals"] = def.terminals;
    if (def.prompt)
        doc["prompt"] = prompt_to_json(*def.prompt);
    return doc;
}

ActionKnowledge parse_kb(const Json& doc)
{
    return ActionKnowledge(parse_kb_definition(doc));
}

ActionKnowledge load_kb(const std::string& path)
{
    auto content = text::read_file(path);
    auto doc = Json::parse(content, nullptr, false);
    if (doc.is_discarded())
        malformed(path + ": not valid JSON");
    return parse_kb(doc);
}

Json to_json(const ActionKnowledge& kb)
{
    return to_json(kb.definition());
}

void save_kb(const ActionKnowledge& kb, const std::string& path)
{
    text::write_file(path, to_json(kb).dump(2) + "\n");
}

bool is_valid_transition(const ActionKnowledge& kb, std::string_view from, std::string_view to)
{
    const auto& next = kb.successors(from);
    return std::find(next.begin(), next.end(), to) != next.end();
}

std::vector<ActionSequence> enumerate_paths(const ActionKnowledge& kb, size_t max_len, size_t budget)
{
    if (max_len < 1)
        throw Error(ErrorCode::Usage, "enumerate_paths: max_len must be >= 1");

    auto out = std::vector<ActionSequence> {};
    auto frontier = std::vector<ActionSequence> {ActionSequence {}};
    for (size_t len = 1; len <= max_len && !frontier.empty(); ++len)
    {
        auto next = std::vector<ActionSequence> {};
        for (const auto& seq: frontier)
        {
            auto from = seq.empty() ? std::string(kStart) : seq.back();
            for (const auto& to: kb.successors(from))
            {
                if (out.size() >= budget)
                    throw Error(ErrorCode::BudgetExceeded,
                                "path enumeration exceeded the budget of " + std::to_string(budget) + " sequences");
                auto extended = seq;
                extended.push_back(to);
                out.push_back(extended);
                if (!kb.is_terminal(to))
                    next.push_back(std::move(extended));
            }
        }
        frontier = std::move(next);
    }
    return out;
}

} // namespace knowagent
