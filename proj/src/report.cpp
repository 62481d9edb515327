// SPDX-License-Identifier: Apache-2.0
#include "knowagent/cli_report.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace knowagent
{

namespace
{

std::string percent(double v)
{
    auto os = std::ostringstream {};
    os << std::fixed << std::setprecision(2) << v * 100.0 << "%";
    return os.str();
}

std::string decimal(double v)
{
    auto os = std::ostringstream {};
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

// Columns after the first are right-aligned.
std::string render_table(const std::vector<std::vector<std::string>>& rows)
{
    auto widths = std::vector<size_t> {};
    for (const auto& row: rows)
    {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    }
    auto os = std::ostringstream {};
    for (const auto& row: rows)
    {
        auto line = std::string {};
        for (size_t c = 0; c < row.size(); ++c)
        {
            auto pad = std::string(widths[c] - row[c].size(), ' ');
            line += c == 0 ? row[c] + pad : "  " + pad + row[c];
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        os << line << "\n";
    }
    return os.str();
}

std::string flags_of(const StepVerdict& v)
{
    auto parts = std::vector<std::string> {};
    for (auto f: v.flags)
        parts.emplace_back(to_string(f));
    return text::join(parts, ", ");
}

std::string step_label(const ActionKnowledge& kb, const Step& step)
{
    if (!step.parsed())
        return "<unparsed>";
    return format_action(step.action, kb);
}

std::string previous_declared(const ActionKnowledge& kb, const Trajectory& traj, size_t upto)
{
    auto prev = std::string(kStart);
    for (size_t i = 0; i < upto && i < traj.steps.size(); ++i)
        if (traj.steps[i].parsed() && kb.find_action(traj.steps[i].action.name))
            prev = traj.steps[i].action.name;
    return prev;
}

const Trajectory* find_task(const CorpusReport& corpus, const std::string& task_id)
{
    for (const auto& t: corpus.trajectories)
        if (t.task_id == task_id)
            return &t;
    return nullptr;
}

std::string side_by_side(const ActionKnowledge& kb, const CorpusReport& left, const Trajectory& flagged,
                         const ValidationReport& report, const CorpusReport* right, const Trajectory* other)
{
    auto leftLines = std::vector<std::string> {left.label + " (flagged)"};
    for (size_t i = 0; i < flagged.steps.size(); ++i)
    {
        auto line = std::to_string(i + 1) + " " + step_label(kb, flagged.steps[i]);
        if (i < report.verdicts.size() && !report.verdicts[i].clean())
        {
            line += "  <- " + flags_of(report.verdicts[i]);
            if (report.verdicts[i].has(StepFlag::MisorderedAction))
                line += " (allowed after " + previous_declared(kb, flagged, i) + ": "
                        + text::join(kb.successors(previous_declared(kb, flagged, i)), ", ") + ")";
        }
        leftLines.push_back(std::move(line));
    }
    auto rightLines = std::vector<std::string> {};
    if (right && other)
    {
        rightLines.push_back(right->label);
        for (size_t i = 0; i < other->steps.size(); ++i)
            rightLines.push_back(std::to_string(i + 1) + " " + step_label(kb, other->steps[i]));
    }

    size_t width = 0;
    for (const auto& l: leftLines)
        width = std::max(width, l.size());
    auto out = "task " + flagged.task_id + "\n";
    for (size_t i = 0; i < std::max(leftLines.size(), rightLines.size()); ++i)
    {
        auto l = i < leftLines.size() ? leftLines[i] : std::string {};
        auto line = "  " + l;
        if (!rightLines.empty())
            line += std::string(width - l.size(), ' ') + " | " + (i < rightLines.size() ? rightLines[i] : std::string {});
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out += line + "\n";
    }
    return out;
}

} // namespace

std::vector<CorpusReport> build_report(const ActionKnowledge& kb, const std::vector<std::string>& labels,
                                       const std::vector<std::vector<Trajectory>>& corpora)
{
    if (corpora.empty())
        throw Error(ErrorCode::EmptyInput, "no trajectory files given");
    auto out = std::vector<CorpusReport> {};
    for (size_t i = 0; i < corpora.size(); ++i)
    {
        auto label = i < labels.size() ? labels[i] : "corpus-" + std::to_string(i + 1);
        if (corpora[i].empty())
            throw Error(ErrorCode::EmptyInput, "corpus '" + label + "' has no trajectories");
        auto c = CorpusReport {};
        c.label = std::move(label);
        c.trajectories = corpora[i];
        for (const auto& traj: c.trajectories)
            c.reports.push_back(validate_trajectory(kb, traj));
        auto qa = std::any_of(c.trajectories.begin(), c.trajectories.end(),
                              [](const Trajectory& t) { return t.outcome.answer.has_value(); });
        c.metrics = summarize(c.trajectories, c.reports, "", qa);
        out.push_back(std::move(c));
    }
    return out;
}

std::string render_report_text(const ActionKnowledge& kb, const std::vector<CorpusReport>& corpora, size_t max_exemplars)
{
    auto out = std::string("Unreasonable action rates\n\n");
    auto rates = std::vector<std::vector<std::string>> {
        {"corpus", "trajectories", "actions", "invalid", "misordered", "invalid_rate", "misordered_rate", "parse_errors",
         "mean_reward", "success_rate"}};
    for (const auto& c: corpora)
    {
        const auto& r = c.metrics.rates;
        rates.push_back({c.label, std::to_string(r.trajectories), std::to_string(r.actions), std::to_string(r.invalid),
                         std::to_string(r.misordered), percent(r.invalid_rate), percent(r.misordered_rate),
                         std::to_string(r.parse_errors), decimal(c.metrics.mean_reward), decimal(c.metrics.success_rate)});
    }
    out += render_table(rates);

    out += "\nPer-task results\n\n";
    auto tasks = std::vector<std::vector<std::string>> {{"corpus", "task", "steps", "reward", "success", "terminated_by", "flags"}};
    for (const auto& c: corpora)
        for (size_t i = 0; i < c.trajectories.size(); ++i)
        {
            const auto& t = c.trajectories[i];
            size_t flagged = 0;
            for (const auto& v: c.reports[i].verdicts)
                flagged += v.clean() ? 0 : 1;
            tasks.push_back({c.label, t.task_id, std::to_string(t.steps.size()), decimal(t.outcome.reward),
                             t.outcome.success ? "yes" : "no", std::string(to_string(t.terminated_by)),
                             std::to_string(flagged)});
        }
    out += render_table(tasks);

    out += "\nViolation exemplars\n";
    size_t shown = 0;
    for (size_t ci = 0; ci < corpora.size(); ++ci)
    {
        const auto& c = corpora[ci];
        size_t shownHere = 0;
        for (size_t i = 0; i < c.trajectories.size() && shownHere < max_exemplars; ++i)
        {
            if (c.reports[i].clean)
                continue;
            const CorpusReport* partner = nullptr;
            const Trajectory* other = nullptr;
            for (size_t cj = 0; cj < corpora.size() && !other; ++cj)
            {
                if (cj == ci)
                    continue;
                if (const auto* t = find_task(corpora[cj], c.trajectories[i].task_id))
                {
                    partner = &corpora[cj];
                    other = t;
                }
            }
            out += "\n" + side_by_side(kb, c, c.trajectories[i], c.reports[i], partner, other);
            ++shownHere;
            ++shown;
        }
    }
    if (shown == 0)
        out += "\n  none\n";
    return out;
}

Json report_to_json(const ActionKnowledge& kb, const std::vector<CorpusReport>& corpora)
{
    auto arr = Json::array();
    for (const auto& c: corpora)
    {
        auto tasks = Json::array();
        for (size_t i = 0; i < c.trajectories.size(); ++i)
        {
            const auto& t = c.trajectories[i];
            auto flagged = Json::array();
            for (const auto& v: c.reports[i].verdicts)
                if (!v.clean())
                {
                    auto flags = Json::array();
                    for (auto f: v.flags)
                        flags.push_back(std::string(to_string(f)));
                    flagged.push_back(Json {{"step", v.index + 1}, {"flags", std::move(flags)}});
                }
            tasks.push_back(Json {{"task_id", t.task_id},
                                  {"steps", t.steps.size()},
                                  {"reward", t.outcome.reward},
                                  {"success", t.outcome.success},
                                  {"terminated_by", std::string(to_string(t.terminated_by))},
                                  {"flagged_steps", std::move(flagged)}});
        }
        arr.push_back(Json {{"label", c.label},
                            {"rates", to_json(c.metrics.rates)},
                            {"mean_reward", c.metrics.mean_reward},
                            {"success_rate", c.metrics.success_rate},
                            {"tasks", std::move(tasks)}});
    }
    return Json {{"kb", kb.task_id()}, {"corpora", std::move(arr)}};
}

} // namespace knowagent
