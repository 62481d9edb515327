// SPDX-License-Identifier: Apache-2.0
#include "knowagent/distill.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <filesystem>
#include <set>

namespace fs = std::filesystem;

namespace knowagent
{

namespace
{

constexpr std::string_view kSchemaHint =
    R"({"actions": [{"name": "Name", "args": ["slot"], "definition": "what it does"}],
 "rules": {"Start": ["Name", ...], "Name": ["Next", ...], "Finish": []},
 "terminals": ["Finish"]})";

[[noreturn]] void unparsable(const std::string& what)
{
    throw Error(ErrorCode::UnparsableDraft, what);
}

Json extract_json_object(std::string_view output)
{
    for (auto open = output.find('{'); open != std::string_view::npos; open = output.find('{', open + 1))
    {
        int depth = 0;
        bool inString = false;
        for (size_t i = open; i < output.size(); ++i)
        {
            char c = output[i];
            if (inString)
            {
                if (c == '\\')
                    ++i;
                else if (c == '"')
                    inString = false;
                continue;
            }
            if (c == '"')
                inString = true;
            else if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0)
            {
                auto doc = Json::parse(output.substr(open, i - open + 1), nullptr, false);
                if (!doc.is_discarded() && doc.is_object())
                    return doc;
                break;
            }
        }
    }
    unparsable("model reply contains no JSON object");
}

void normalize_actions(Json& doc)
{
    if (!doc.contains("actions") || !doc["actions"].is_array())
        return;
    for (auto& action: doc["actions"])
    {
        if (!action.is_object())
            continue;
        if (!action.contains("syntax_style"))
            action["syntax_style"] = "bracket";
        if (!action.contains("arg_slots") && action.contains("args") && action["args"].is_array())
        {
            auto slots = Json::array();
            for (const auto& arg: action["args"])
                if (arg.is_string())
                    slots.push_back(Json {{"slot_name", arg.get<std::string>()}, {"description", ""}});
            action["arg_slots"] = std::move(slots);
        }
        action.erase("args");
    }
}

void default_terminals(Json& doc)
{
    if (doc.contains("terminals") || !doc.contains("rules") || !doc["rules"].is_object())
        return;
    auto terminals = Json::array();
    for (const auto& [from, targets]: doc["rules"].items())
        if (from != kStart && targets.is_array() && targets.empty())
            terminals.push_back(from);
    doc["terminals"] = std::move(terminals);
}

void write_draft_files(const DistillDraft& draft, const fs::path& dir, const std::string& kbName)
{
    text::write_file((dir / kbName).string(), to_json(draft.definition).dump(2) + "\n");
    text::write_file((dir / "review_checklist.md").string(), draft.checklist);
}

std::string generate_once(const PolicyClient& policy, const std::string& task_id, const std::string& prompt)
{
    auto session = policy.open("distill:" + task_id);
    try
    {
        return session->generate(prompt, {}, Sampling {});
    }
    catch (const PolicyExhausted& e)
    {
        throw Error(ErrorCode::PolicyUnavailable, e.what());
    }
}

} // namespace

std::string distill_stage1_prompt(std::string_view task_description)
{
    return "You are helping an expert write down the action knowledge of an agent task.\n"
           "Task description:\n"
           + std::string(task_description)
           + "\n\nList every action the agent may need and the rules that say which action may follow which. "
             "Start is the pseudo-action before the first step. Every action must be reachable from Start and must "
             "lead to a terminal action.\nReply with a single JSON object of this shape:\n"
           + std::string(kSchemaHint) + "\n";
}

std::string distill_stage2_prompt(std::string_view task_description, const KbDefinition& refined)
{
    auto lines = std::vector<std::string> {};
    for (const auto& a: refined.actions)
    {
        auto slots = std::vector<std::string> {};
        for (const auto& s: a.arg_slots)
            slots.push_back(s.name);
        lines.push_back("- " + a.name + "[" + text::join(slots, ", ") + "]: " + a.definition);
    }
    return "Task description:\n" + std::string(task_description)
           + "\n\nThe actions below have been reviewed by an expert and are final:\n" + text::join(lines, "\n")
           + "\n\nUsing only these actions, give the transition rules: for Start and for each action, the actions "
             "that may come next. Terminal actions have no successors.\nReply with a single JSON object of this shape:\n"
             R"({"rules": {"Start": ["..."], "Action": ["..."]}, "terminals": ["..."]})"
           + "\n";
}

KbDefinition parse_draft(std::string_view output, const std::string& task_id)
{
    auto doc = extract_json_object(output);
    doc["task_id"] = task_id;
    normalize_actions(doc);
    default_terminals(doc);
    try
    {
        return parse_kb_definition(doc);
    }
    catch (const Error& e)
    {
        unparsable(std::string("draft does not fit the KB schema: ") + e.what());
    }
}

std::string review_checklist(const KbDefinition& def, const std::vector<InvariantResult>& checks, int stage)
{
    auto out = "# Review checklist: " + def.task_id + " (stage " + std::to_string(stage) + ")\n\n## Invariants\n\n";
    for (const auto& c: checks)
        out += std::string("- [") + (c.ok ? "x" : " ") + "] " + c.name + (c.ok ? "" : ": " + c.detail) + "\n";

    out += "\n## Actions\n\n";
    for (const auto& a: def.actions)
    {
        auto slots = std::vector<std::string> {};
        for (const auto& s: a.arg_slots)
            slots.push_back(s.name);
        out += "- [ ] " + a.name + "[" + text::join(slots, ", ") + "]: " + a.definition + "\n";
    }
    out += "\n## Rules\n\n";
    for (const auto& r: def.rules)
        out += "- [ ] " + r.from + " -> (" + text::join(r.to, ", ") + ")\n";
    out += "\n## Manual steps\n\n";
    if (stage == 1)
        out += "- [ ] Remove redundant or overlapping actions\n"
               "- [ ] Fix argument slots and definitions\n"
               "- [ ] Save the refined file and run stage 2 on it\n";
    else
        out += "- [ ] Check every rule against the task semantics\n"
               "- [ ] Add prompt material before rendering\n"
               "- [ ] Confirm `kb validate` accepts the candidate\n";
    return out;
}

DistillDraft distill_stage1(const PolicyClient& policy, const std::string& task_id, std::string_view task_description,
                            const std::string& out_dir)
{
    if (text::trim(task_description).empty())
        throw Error(ErrorCode::EmptyInput, "task description is empty");

    auto raw = generate_once(policy, task_id, distill_stage1_prompt(task_description));
    auto dir = fs::path(out_dir);
    auto draft = DistillDraft {};
    draft.raw_output = raw;
    try
    {
        draft.definition = parse_draft(raw, task_id);
    }
    catch (const Error&)
    {
        text::write_file((dir / "draft.raw.txt").string(), raw);
        throw;
    }
    draft.checks = check_invariants(draft.definition);
    draft.checklist = review_checklist(draft.definition, draft.checks, 1);
    write_draft_files(draft, dir, "draft.kb.json");
    return draft;
}

DistillDraft distill_stage2(const PolicyClient& policy, const KbDefinition& refined, std::string_view task_description,
                            const std::string& out_dir)
{
    if (text::trim(task_description).empty())
        throw Error(ErrorCode::EmptyInput, "task description is empty");

    auto raw = generate_once(policy, refined.task_id, distill_stage2_prompt(task_description, refined));
    auto dir = fs::path(out_dir);
    auto draft = DistillDraft {};
    draft.raw_output = raw;
    try
    {
        auto doc = extract_json_object(raw);
        auto full = to_json(refined);
        full["rules"] = doc.contains("rules") ? doc["rules"] : Json();
        if (doc.contains("terminals"))
            full["terminals"] = doc["terminals"];
        else
        {
            full.erase("terminals");
            default_terminals(full);
        }
        draft.definition = parse_draft(full.dump(), refined.task_id);
        draft.definition.actions = refined.actions;
        draft.definition.prompt = refined.prompt;
    }
    catch (const Error&)
    {
        text::write_file((dir / "draft.raw.txt").string(), raw);
        throw;
    }
    draft.checks = check_invariants(draft.definition);
    draft.checklist = review_checklist(draft.definition, draft.checks, 2);
    write_draft_files(draft, dir, "candidate.kb.json");
    return draft;
}

} // namespace knowagent
