// SPDX-License-Identifier: Apache-2.0
#include "knowagent/trajectory.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>

namespace knowagent
{

namespace
{

struct TemplateSegment
{
    bool slot = false;
    std::string value; // literal text or slot name
};

std::vector<TemplateSegment> split_template(std::string_view pattern)
{
    auto segments = std::vector<TemplateSegment> {};
    size_t pos = 0;
    while (pos < pattern.size())
    {
        auto open = pattern.find('{', pos);
        if (open == std::string_view::npos)
        {
            segments.push_back({false, std::string(pattern.substr(pos))});
            break;
        }
        if (open > pos)
            segments.push_back({false, std::string(pattern.substr(pos, open - pos))});
        auto close = pattern.find('}', open);
        if (close == std::string_view::npos)
        {
            segments.push_back({false, std::string(pattern.substr(open))});
            break;
        }
        segments.push_back({true, std::string(pattern.substr(open + 1, close - open - 1))});
        pos = close + 1;
    }
    return segments;
}

bool iequal_at(std::string_view input, size_t pos, std::string_view literal)
{
    if (pos + literal.size() > input.size())
        return false;
    for (size_t i = 0; i < literal.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(input[pos + i])) != std::tolower(static_cast<unsigned char>(literal[i])))
            return false;
    return true;
}

// Shortest-first backtracking match of slot templates; slot values must be non-empty after trimming.
bool match_segments(const std::vector<TemplateSegment>& segs, size_t seg, std::string_view input, size_t pos,
                    std::map<std::string, std::string>& slots)
{
    if (seg == segs.size())
        return pos == input.size();
    const auto& s = segs[seg];
    if (!s.slot)
        return iequal_at(input, pos, s.value) && match_segments(segs, seg + 1, input, pos + s.value.size(), slots);

    for (size_t end = pos + 1; end <= input.size(); ++end)
    {
        auto value = text::trim(input.substr(pos, end - pos));
        if (value.empty())
            continue;
        if (seg + 1 < segs.size() && !segs[seg + 1].slot && !iequal_at(input, end, segs[seg + 1].value))
            continue;
        slots[s.value] = std::string(value);
        if (match_segments(segs, seg + 1, input, end, slots))
            return true;
        slots.erase(s.value);
    }
    return false;
}

std::optional<std::vector<std::string>> match_verb_phrase(const ActionSpec& spec, std::string_view input)
{
    for (const auto& pattern: spec.patterns)
    {
        auto slots = std::map<std::string, std::string> {};
        if (!match_segments(split_template(pattern), 0, input, 0, slots))
            continue;
        auto args = std::vector<std::string> {};
        for (const auto& slot: spec.arg_slots)
        {
            auto it = slots.find(slot.name);
            if (it == slots.end())
                break;
            args.push_back(it->second);
        }
        if (args.size() == spec.arity())
            return args;
    }
    return std::nullopt;
}

std::vector<std::string> split_args(std::string_view content, const ActionSpec* spec)
{
    auto trimmed = text::trim(content);
    if (spec && spec->arity() == 0 && trimmed.empty())
        return {};
    if (!spec || spec->arity() <= 1)
        return trimmed.empty() && spec == nullptr ? std::vector<std::string> {} : std::vector<std::string> {std::string(trimmed)};
    auto args = std::vector<std::string> {};
    for (const auto& part: text::split(trimmed, ","))
        args.emplace_back(text::trim(part));
    return args;
}

const std::regex& bracket_regex()
{
    static const auto re = std::regex(R"(^([A-Za-z_][A-Za-z0-9_\-]*)\[([\s\S]*)\]$)");
    return re;
}

const std::regex& token_regex()
{
    static const auto re = std::regex(R"(^([A-Za-z_][A-Za-z0-9_\-]*)(?:\[([\s\S]*)\]|\(([\s\S]*)\))?$)");
    return re;
}

// Splits on "->" outside brackets/parentheses.
std::vector<std::string> split_path(std::string_view textValue)
{
    auto tokens = std::vector<std::string> {};
    int depth = 0;
    size_t start = 0;
    for (size_t i = 0; i < textValue.size(); ++i)
    {
        auto c = textValue[i];
        if (c == '[' || c == '(')
            ++depth;
        else if ((c == ']' || c == ')') && depth > 0)
            --depth;
        else if (depth == 0 && c == '-' && i + 1 < textValue.size() && textValue[i + 1] == '>')
        {
            tokens.emplace_back(text::trim(textValue.substr(start, i - start)));
            start = i + 2;
            ++i;
        }
    }
    tokens.emplace_back(text::trim(textValue.substr(start)));
    return tokens;
}

struct LabeledLine
{
    std::string label;
    int number = 0;
    std::string rest;
    size_t line = 0;
};

std::optional<LabeledLine> match_label(const std::string& line, size_t lineNo)
{
    static const auto re = std::regex(R"(^\s*(ActionPath|Thought|Action|Observation)\s*(\d+)\s*:\s?(.*)$)");
    auto m = std::smatch {};
    if (!std::regex_match(line, m, re))
        return std::nullopt;
    return LabeledLine {m[1].str(), std::stoi(m[2].str()), m[3].str(), lineNo};
}

Json invocation_to_json(const ActionInvocation& a)
{
    return Json {{"name", a.name}, {"args", a.args}, {"raw", a.raw}};
}

ActionInvocation invocation_from_json(const Json& j)
{
    auto a = ActionInvocation {};
    a.name = j.at("name").get<std::string>();
    a.args = j.at("args").get<std::vector<std::string>>();
    a.raw = j.value("raw", std::string {});
    return a;
}

Termination termination_from_string(const std::string& s)
{
    if (s == "terminal_action")
        return Termination::TerminalAction;
    if (s == "goal_reached")
        return Termination::GoalReached;
    if (s == "step_limit")
        return Termination::StepLimit;
    if (s == "policy_error")
        return Termination::PolicyError;
    throw Error(ErrorCode::MalformedDocument, "unknown terminated_by '" + s + "'");
}

ParseFailureKind failure_kind_from_string(const std::string& s)
{
    if (s == "missing_field")
        return ParseFailureKind::MissingField;
    if (s == "malformed_action_path")
        return ParseFailureKind::MalformedActionPath;
    if (s == "unknown_action_syntax")
        return ParseFailureKind::UnknownActionSyntax;
    throw Error(ErrorCode::MalformedDocument, "unknown parse failure kind '" + s + "'");
}

} // namespace

ActionInvocation start_invocation()
{
    return ActionInvocation {.name = std::string(kStart), .args = {}, .raw = std::string(kStart)};
}

std::string_view to_string(ParseFailureKind kind)
{
    switch (kind)
    {
        case ParseFailureKind::MissingField: return "missing_field";
        case ParseFailureKind::MalformedActionPath: return "malformed_action_path";
        case ParseFailureKind::UnknownActionSyntax: return "unknown_action_syntax";
    }
    return "unknown";
}

std::string_view to_string(Termination t)
{
    switch (t)
    {
        case Termination::TerminalAction: return "terminal_action";
        case Termination::GoalReached: return "goal_reached";
        case Termination::StepLimit: return "step_limit";
        case Termination::PolicyError: return "policy_error";
    }
    return "unknown";
}

size_t Trajectory::retries() const
{
    size_t n = 0;
    for (const auto& s: steps)
        n += s.rejections.size();
    return n;
}

std::variant<ActionInvocation, ParseFailure> parse_action(std::string_view input, const ActionKnowledge& kb)
{
    auto trimmed = std::string(text::trim(input));
    if (trimmed.empty())
        return ParseFailure {ParseFailureKind::MissingField, "Action", "empty action"};

    auto m = std::smatch {};
    if (std::regex_match(trimmed, m, bracket_regex()))
    {
        auto name = m[1].str();
        return ActionInvocation {.name = name, .args = split_args(m[2].str(), kb.find_action(name)), .raw = trimmed};
    }

    for (const auto& spec: kb.actions())
    {
        if (spec.syntax_style != SyntaxStyle::VerbPhrase)
            continue;
        if (auto args = match_verb_phrase(spec, trimmed))
            return ActionInvocation {.name = spec.name, .args = std::move(*args), .raw = trimmed};
    }
    return ParseFailure {ParseFailureKind::UnknownActionSyntax, "Action", "cannot parse action '" + trimmed + "'"};
}

std::string format_action(const ActionInvocation& action, const ActionKnowledge& kb)
{
    const auto* spec = kb.find_action(action.name);
    if (!spec)
        return action.raw.empty() ? action.name + "[" + text::join(action.args, ", ") + "]" : action.raw;
    if (spec->syntax_style == SyntaxStyle::Bracket || action.args.size() != spec->arity())
        return action.name + "[" + text::join(action.args, ", ") + "]";

    auto out = std::string {};
    for (const auto& seg: split_template(spec->patterns.front()))
    {
        if (!seg.slot)
        {
            out += seg.value;
            continue;
        }
        for (size_t i = 0; i < spec->arg_slots.size(); ++i)
            if (spec->arg_slots[i].name == seg.value)
                out += action.args[i];
    }
    return out;
}

std::string format_path_token(const ActionInvocation& action, const ActionKnowledge& kb)
{
    if (action.name == kStart)
        return std::string(kStart);
    const auto* spec = kb.find_action(action.name);
    auto args = text::join(action.args, ", ");
    if (spec && spec->syntax_style == SyntaxStyle::VerbPhrase)
        return action.name + "(" + args + ")";
    return action.name + "[" + args + "]";
}

std::string format_path(const std::vector<ActionInvocation>& path, const ActionKnowledge& kb)
{
    auto tokens = std::vector<std::string> {};
    for (const auto& a: path)
        tokens.push_back(format_path_token(a, kb));
    return text::join(tokens, "->");
}

std::variant<std::vector<ActionInvocation>, ParseFailure> parse_path(std::string_view input, const ActionKnowledge& kb)
{
    auto failure = [](std::string detail) {
        return ParseFailure {ParseFailureKind::MalformedActionPath, "ActionPath", std::move(detail)};
    };
    auto tokens = split_path(input);
    if (tokens.empty() || tokens.front() != kStart)
        return failure("action path must begin with Start");

    auto path = std::vector<ActionInvocation> {start_invocation()};
    for (size_t i = 1; i < tokens.size(); ++i)
    {
        auto m = std::smatch {};
        if (!std::regex_match(tokens[i], m, token_regex()))
            return failure("malformed path token '" + tokens[i] + "'");
        auto name = m[1].str();
        if (name == kStart)
            return failure("Start may only appear first");
        const auto* spec = kb.find_action(name);
        auto args = std::vector<std::string> {};
        if (m[2].matched)
            args = split_args(m[2].str(), spec);
        else if (m[3].matched)
        {
            auto inner = std::string(text::trim(m[3].str()));
            if (!inner.empty())
                for (const auto& part: text::split(inner, ","))
                    args.emplace_back(text::trim(part));
        }
        path.push_back(ActionInvocation {.name = name, .args = std::move(args), .raw = tokens[i]});
    }
    return path;
}

ParseResult parse_step_output(std::string_view output, const ActionKnowledge& kb, size_t index)
{
    auto lines = text::split_lines(output);
    auto labeled = std::vector<LabeledLine> {};
    for (size_t i = 0; i < lines.size(); ++i)
        if (auto l = match_label(lines[i], i))
            labeled.push_back(std::move(*l));

    auto wanted = static_cast<int>(index) + 1;
    auto findLabel = [&](std::string_view label, size_t fromLine) -> const LabeledLine* {
        const LabeledLine* first = nullptr;
        for (const auto& l: labeled)
        {
            if (l.label != label || l.line < fromLine)
                continue;
            if (l.number == wanted)
                return &l;
            if (!first)
                first = &l;
        }
        return first;
    };

    const auto* pathLine = findLabel("ActionPath", 0);
    if (!pathLine)
        return ParseFailure {ParseFailureKind::MissingField, "ActionPath", "no 'ActionPath N:' line"};
    const auto* thoughtLine = findLabel("Thought", pathLine->line);
    if (!thoughtLine)
        return ParseFailure {ParseFailureKind::MissingField, "Thought", "no 'Thought N:' line"};
    const auto* actionLine = findLabel("Action", thoughtLine->line);
    if (!actionLine)
        return ParseFailure {ParseFailureKind::MissingField, "Action", "no 'Action N:' line"};

    auto path = parse_path(pathLine->rest, kb);
    if (auto* failure = std::get_if<ParseFailure>(&path))
        return *failure;

    // Thought may continue over several lines up to the Action label.
    auto thought = thoughtLine->rest;
    for (auto i = thoughtLine->line + 1; i < actionLine->line; ++i)
        thought += "\n" + lines[i];

    auto action = parse_action(actionLine->rest, kb);
    if (auto* failure = std::get_if<ParseFailure>(&action))
        return *failure;

    return ParsedStep {
        .action_path = std::move(std::get<std::vector<ActionInvocation>>(path)),
        .thought = std::string(text::trim(thought)),
        .action = std::move(std::get<ActionInvocation>(action)),
    };
}

std::string format_step_output(const Step& step, const ActionKnowledge& kb)
{
    if (!step.parsed())
        return step.raw_output;
    auto k = std::to_string(step.index + 1);
    return "ActionPath " + k + ": " + format_path(step.action_path, kb) + "\nThought " + k + ": " + step.thought
           + "\nAction " + k + ": " + format_action(step.action, kb);
}

std::string serialize_scratchpad(const Trajectory& traj, const ActionKnowledge& kb, size_t upto)
{
    auto out = std::string {};
    for (size_t i = 0; i < std::min(upto, traj.steps.size()); ++i)
    {
        const auto& step = traj.steps[i];
        out += "\n" + format_step_output(step, kb);
        out += "\nObservation " + std::to_string(step.index + 1) + ": " + step.observation;
    }
    return out;
}

std::string serialize_scratchpad(const Trajectory& traj, const ActionKnowledge& kb)
{
    return serialize_scratchpad(traj, kb, traj.steps.size());
}

std::vector<ActionInvocation> canonical_path(const Trajectory& traj, size_t upto)
{
    auto path = std::vector<ActionInvocation> {start_invocation()};
    for (size_t i = 0; i < std::min(upto, traj.steps.size()); ++i)
        if (traj.steps[i].parsed())
            path.push_back(traj.steps[i].action);
    return path;
}

Json to_json(const Trajectory& traj)
{
    auto steps = Json::array();
    for (const auto& s: traj.steps)
    {
        auto step = Json::object();
        step["index"] = s.index;
        auto path = Json::array();
        for (const auto& a: s.action_path)
            path.push_back(invocation_to_json(a));
        step["action_path"] = std::move(path);
        step["thought"] = s.thought;
        step["action"] = invocation_to_json(s.action);
        step["observation"] = s.observation;
        if (s.parse_error)
        {
            step["parse_error"] = Json {{"kind", to_string(s.parse_error->kind)},
                                        {"field", s.parse_error->field},
                                        {"detail", s.parse_error->detail}};
            step["raw_output"] = s.raw_output;
        }
        if (!s.rejections.empty())
        {
            auto rejections = Json::array();
            for (const auto& r: s.rejections)
                rejections.push_back(Json {{"output", r.output}, {"reason", r.reason}});
            step["rejections"] = std::move(rejections);
        }
        if (!s.warnings.empty())
            step["warnings"] = s.warnings;
        steps.push_back(std::move(step));
    }

    auto doc = Json::object();
    doc["task_id"] = traj.task_id;
    doc["task_text"] = traj.task_text;
    doc["steps"] = std::move(steps);
    doc["outcome"] = Json {{"reward", traj.outcome.reward},
                           {"success", traj.outcome.success},
                           {"answer", traj.outcome.answer ? Json(*traj.outcome.answer) : Json(nullptr)}};
    doc["terminated_by"] = to_string(traj.terminated_by);
    if (traj.error)
        doc["error"] = *traj.error;
    return doc;
}

Trajectory trajectory_from_json(const Json& doc)
{
    try
    {
        auto traj = Trajectory {};
        traj.task_id = doc.at("task_id").get<std::string>();
        traj.task_text = doc.value("task_text", std::string {});
        for (const auto& s: doc.at("steps"))
        {
            auto step = Step {};
            step.index = s.at("index").get<size_t>();
            for (const auto& a: s.at("action_path"))
                step.action_path.push_back(invocation_from_json(a));
            step.thought = s.value("thought", std::string {});
            step.action = invocation_from_json(s.at("action"));
            step.observation = s.value("observation", std::string {});
            if (auto it = s.find("parse_error"); it != s.end())
            {
                step.parse_error = ParseFailure {failure_kind_from_string(it->at("kind").get<std::string>()),
                                                 it->value("field", std::string {}),
                                                 it->value("detail", std::string {})};
                step.raw_output = s.value("raw_output", std::string {});
            }
            if (auto it = s.find("rejections"); it != s.end())
                for (const auto& r: *it)
                    step.rejections.push_back(Rejection {r.at("output").get<std::string>(), r.at("reason").get<std::string>()});
            if (auto it = s.find("warnings"); it != s.end())
                step.warnings = it->get<std::vector<std::string>>();
            traj.steps.push_back(std::move(step));
        }
        const auto& outcome = doc.at("outcome");
        traj.outcome.reward = outcome.at("reward").get<double>();
        traj.outcome.success = outcome.at("success").get<bool>();
        if (auto it = outcome.find("answer"); it != outcome.end() && it->is_string())
            traj.outcome.answer = it->get<std::string>();
        traj.terminated_by = termination_from_string(doc.at("terminated_by").get<std::string>());
        if (auto it = doc.find("error"); it != doc.end() && it->is_string())
            traj.error = it->get<std::string>();
        return traj;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorCode::MalformedDocument, std::string("trajectory record: ") + e.what());
    }
}

std::string to_jsonl(const std::vector<Trajectory>& trajectories)
{
    auto out = std::string {};
    for (const auto& t: trajectories)
        out += to_json(t).dump() + "\n";
    return out;
}

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories)
{
    text::write_file(path, to_jsonl(trajectories));
}

std::vector<Trajectory> read_trajectories(const std::string& path)
{
    auto out = std::vector<Trajectory> {};
    size_t lineNo = 0;
    for (const auto& line: text::split_lines(text::read_file(path)))
    {
        ++lineNo;
        if (text::trim(line).empty())
            continue;
        auto doc = Json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw Error(ErrorCode::MalformedDocument, path + ":" + std::to_string(lineNo) + ": not valid JSON");
        out.push_back(trajectory_from_json(doc));
    }
    return out;
}

} // namespace knowagent
