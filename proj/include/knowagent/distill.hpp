// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/policy.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

struct DistillDraft
{
    KbDefinition definition;
    std::vector<InvariantResult> checks;
    std::string raw_output;
    std::string checklist; // markdown
};

std::string distill_stage1_prompt(std::string_view task_description);
/// Actions are fixed; only rules and terminals are requested.
std::string distill_stage2_prompt(std::string_view task_description, const KbDefinition& refined);

/// Extracts the first JSON object of a model reply (fenced or bare) and lifts it to a
/// KB definition. Missing syntax_style means bracket; `args: [..]` is accepted as a
/// shorthand for arg_slots; missing terminals are the actions without successors.
/// Throws Error(UnparsableDraft).
KbDefinition parse_draft(std::string_view output, const std::string& task_id);

std::string review_checklist(const KbDefinition& def, const std::vector<InvariantResult>& checks, int stage);

/// Stage 1: propose actions and rules. Writes draft.kb.json and review_checklist.md
/// into out_dir; on an unparsable reply writes draft.raw.txt and throws.
DistillDraft distill_stage1(const PolicyClient& policy, const std::string& task_id, std::string_view task_description,
                            const std::string& out_dir);

/// Stage 2: re-prompt with the human-refined actions. Writes candidate.kb.json and
/// review_checklist.md; the candidate still has to pass load_kb.
DistillDraft distill_stage2(const PolicyClient& policy, const KbDefinition& refined, std::string_view task_description,
                            const std::string& out_dir);

} // namespace knowagent
