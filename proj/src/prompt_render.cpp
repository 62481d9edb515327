// SPDX-License-Identifier: Apache-2.0
#include "knowagent/prompt_render.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

namespace knowagent
{

namespace
{

constexpr std::string_view kGraphIndent = "    ";

std::string indent_for(PromptLayout layout)
{
    return layout == PromptLayout::Graph ? std::string(kGraphIndent) : std::string {};
}

void append_line(std::string& out, std::string_view line)
{
    out += line;
    out += '\n';
}

} // namespace

std::vector<std::string> render_rule_lines(const ActionKnowledge& kb)
{
    const auto& prompt = kb.prompt();
    if (prompt && prompt->layout == PromptLayout::Guidelines && !prompt->rule_lines.empty())
        return prompt->rule_lines;

    auto lines = std::vector<std::string> {};
    for (const auto& rule: kb.rules())
        lines.push_back(rule.from + ":(" + text::join(rule.to, ", ") + ")");
    return lines;
}

std::string render_knowledge_text(const ActionKnowledge& kb)
{
    auto layout = kb.prompt() ? kb.prompt()->layout : PromptLayout::Graph;
    auto indent = indent_for(layout);

    auto out = std::string {};
    if (kb.prompt())
        for (const auto& line: kb.prompt()->preamble)
            append_line(out, line);
    for (const auto& line: render_rule_lines(kb))
        append_line(out, indent + line);
    if (kb.prompt() && !kb.prompt()->interpretation_header.empty())
    {
        out += '\n';
        append_line(out, kb.prompt()->interpretation_header);
        for (const auto& line: kb.prompt()->interpretation_lines)
            append_line(out, indent + line);
    }
    if (!out.empty())
        out.pop_back();
    return out;
}

PromptTemplate build_template(const ActionKnowledge& kb)
{
    if (!kb.prompt())
        throw Error(ErrorCode::MissingSegment, "KB '" + kb.task_id() + "' carries no prompt material");
    const auto& p = *kb.prompt();

    auto tmpl = PromptTemplate {};
    tmpl.layout = p.layout;
    tmpl.overview = render_knowledge_text(kb);
    tmpl.definitions_header = p.definitions_header;
    auto indent = indent_for(p.layout);
    size_t n = 0;
    for (const auto& action: kb.actions())
    {
        if (action.definition.empty())
            continue;
        ++n;
        auto number = p.layout == PromptLayout::Graph ? "(" + std::to_string(n) + ") " : std::to_string(n) + ") ";
        tmpl.action_definitions.push_back(indent + number + action.definition);
    }
    tmpl.principle = p.principle;
    tmpl.demonstrations = p.demonstrations;
    tmpl.demonstrations_header = p.demonstrations_header;
    tmpl.demonstrations_footer = p.demonstrations_footer;
    tmpl.task_prefix = p.task_prefix;
    return tmpl;
}

std::string render_system_prompt(const PromptTemplate& tmpl)
{
    if (tmpl.overview.empty())
        throw Error(ErrorCode::MissingSegment, "prompt segment 'overview' is empty");
    if (tmpl.action_definitions.empty())
        throw Error(ErrorCode::MissingSegment, "prompt segment 'action definitions' is empty");
    if (tmpl.principle.empty())
        throw Error(ErrorCode::MissingSegment, "prompt segment 'principle' is empty");
    if (tmpl.demonstrations.empty())
        throw Error(ErrorCode::MissingSegment, "prompt segment 'demonstrations' is empty");

    auto out = std::string {};
    append_line(out, tmpl.overview);
    out += '\n';
    if (!tmpl.definitions_header.empty())
        append_line(out, tmpl.definitions_header);
    for (const auto& line: tmpl.action_definitions)
        append_line(out, line);
    out += '\n';
    append_line(out, tmpl.principle);
    out += '\n';
    if (!tmpl.demonstrations_header.empty())
        append_line(out, tmpl.demonstrations_header);
    for (size_t i = 0; i < tmpl.demonstrations.size(); ++i)
    {
        if (i > 0)
            out += '\n';
        append_line(out, tmpl.demonstrations[i]);
    }
    if (!tmpl.demonstrations_footer.empty())
        append_line(out, tmpl.demonstrations_footer);
    return out;
}

std::string render_episode_prompt(const PromptTemplate& tmpl, std::string_view task, std::string_view scratchpad)
{
    auto out = render_system_prompt(tmpl);
    out += '\n';
    out += tmpl.task_prefix;
    out += task;
    out += scratchpad;
    return out;
}

} // namespace knowagent
