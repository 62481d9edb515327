// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

/// The four planning-prompt segments plus the task line prefix. Built from a KB.
struct PromptTemplate
{
    std::string overview;                         // rule listing + interpretation
    std::vector<std::string> action_definitions;  // numbered, one per listed action
    std::string definitions_header;
    std::string principle;
    std::vector<std::string> demonstrations;
    std::string demonstrations_header;
    std::string demonstrations_footer;
    std::string task_prefix;
    PromptLayout layout = PromptLayout::Graph;
};

/// One line per rule. Graph layout: `From:(To1, To2)` in rules order;
/// guidelines layout: the KB's verbatim rule lines.
std::vector<std::string> render_rule_lines(const ActionKnowledge& kb);

/// Overview segment: preamble, rule lines, interpretation header and lines.
/// Deterministic; identical KBs give byte-identical text.
std::string render_knowledge_text(const ActionKnowledge& kb);

/// Throws Error(MissingSegment) when the KB carries no prompt material.
PromptTemplate build_template(const ActionKnowledge& kb);

/// Overview, definitions, principle and demonstrations, one blank line apart.
/// Throws Error(MissingSegment) if any of the four is empty.
std::string render_system_prompt(const PromptTemplate& tmpl);

/// System prompt, a blank line, then `<task_prefix><task><scratchpad>`.
std::string render_episode_prompt(const PromptTemplate& tmpl, std::string_view task, std::string_view scratchpad);

} // namespace knowagent
