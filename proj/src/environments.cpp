// SPDX-License-Identifier: Apache-2.0
#include "knowagent/environments.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace knowagent
{

namespace
{

const std::set<std::string, std::less<>> kArticles {"a", "an", "the"};

const std::set<std::string, std::less<>> kSearchStopwords {
    "a", "an", "the", "of", "is", "in", "and", "to", "who", "what", "was", "for", "on", "by",
    "with", "how", "many", "which", "did", "does", "are", "were", "his", "her", "its", "as",
};

std::vector<std::string> keyword_tokens(std::string_view s)
{
    auto tokens = std::vector<std::string> {};
    auto current = std::string {};
    for (unsigned char c: s)
    {
        if (std::isalnum(c))
            current += static_cast<char>(std::tolower(c));
        else if (!current.empty())
        {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

bool icontains(std::string_view haystack, std::string_view needle)
{
    return text::to_lower(haystack).find(text::to_lower(needle)) != std::string::npos;
}

std::string first_arg(const ActionInvocation& action)
{
    return action.args.empty() ? std::string {} : action.args.front();
}

std::string qa_invalid(const ActionInvocation& action)
{
    auto shown = action.raw.empty() ? action.name : action.raw;
    return "Invalid action: " + shown + ". Valid actions are Search[<topic>], Retrieve[<entity>], "
           "Lookup[<keyword>] and Finish[<answer>].";
}

// --- household helpers ---------------------------------------------------------

bool has(const std::vector<std::string>& items, std::string_view value)
{
    return std::find(items.begin(), items.end(), value) != items.end();
}

void erase_value(std::vector<std::string>& items, std::string_view value)
{
    items.erase(std::remove(items.begin(), items.end(), value), items.end());
}

std::string list_contents(const Receptacle& r)
{
    if (r.contents.empty())
        return "nothing";
    auto items = std::vector<std::string> {};
    for (const auto& obj: r.contents)
        items.push_back("a " + obj);
    if (items.size() > 1)
        items.back() = "and " + items.back();
    return text::join(items, ", ");
}

std::string describe(const std::string& name, const Receptacle& r)
{
    if (r.openable && !r.open)
        return "The " + name + " is closed.";
    if (r.openable)
        return "The " + name + " is open. In it, you see " + list_contents(r) + ".";
    return "On the " + name + ", you see " + list_contents(r) + ".";
}

bool receptacle_matches(std::string_view name, std::string_view target)
{
    return name == target || object_class_of(name) == target;
}

// Argument layout shared by all household actions.
struct HouseholdArgs
{
    std::string object;
    std::string receptacle;
};

std::optional<HouseholdArgs> household_args(const ActionInvocation& action)
{
    static const std::set<std::string, std::less<>> receptacleOnly {"Goto", "Open", "Use"};
    static const std::set<std::string, std::less<>> objectAndReceptacle {"Take", "Put", "Clean", "Heat", "Cool"};
    if (receptacleOnly.contains(action.name) && action.args.size() == 1)
        return HouseholdArgs {{}, action.args[0]};
    if (objectAndReceptacle.contains(action.name) && action.args.size() == 2)
        return HouseholdArgs {action.args[0], action.args[1]};
    if (action.name == "Finish" && action.args.empty())
        return HouseholdArgs {};
    return std::nullopt;
}

std::string affordance_for(std::string_view action)
{
    if (action == "Clean")
        return "clean";
    if (action == "Heat")
        return "heat";
    if (action == "Cool")
        return "cool";
    return {};
}

bool precondition_holds(const HouseholdWorld& w, std::string_view predicate, std::string_view actionName,
                        const HouseholdArgs& args)
{
    auto rit = w.receptacles.find(args.receptacle);
    const Receptacle* r = rit == w.receptacles.end() ? nullptr : &rit->second;

    if (predicate == "agent_at_receptacle")
        return r && w.agent_at == args.receptacle;
    if (predicate == "receptacle_openable")
        return r && r->openable;
    if (predicate == "receptacle_closed")
        return r && r->openable && !r->open;
    if (predicate == "receptacle_accessible")
        return r && (!r->openable || r->open);
    if (predicate == "object_in_receptacle")
        return r && has(r->contents, args.object);
    if (predicate == "inventory_empty")
        return w.inventory.empty();
    if (predicate == "object_in_inventory")
        return has(w.inventory, args.object);
    if (predicate == "receptacle_affords")
        return r && has(r->affords, affordance_for(actionName));
    return false;
}

} // namespace

// --- metrics ---------------------------------------------------------------------

std::vector<std::string> normalize_answer_tokens(std::string_view s)
{
    auto cleaned = std::string {};
    cleaned.reserve(s.size());
    for (unsigned char c: s)
        cleaned += std::ispunct(c) ? ' ' : static_cast<char>(std::tolower(c));

    auto tokens = std::vector<std::string> {};
    for (const auto& part: text::split(cleaned, " "))
    {
        auto token = std::string(text::trim(part));
        if (!token.empty() && !kArticles.contains(token))
            tokens.push_back(std::move(token));
    }
    return tokens;
}

double f1_score(std::string_view prediction, std::string_view gold)
{
    auto pred = normalize_answer_tokens(prediction);
    auto ref = normalize_answer_tokens(gold);
    if (pred.empty() || ref.empty())
        return 0.0;

    auto counts = std::map<std::string, int> {};
    for (const auto& t: ref)
        ++counts[t];
    size_t common = 0;
    for (const auto& t: pred)
        if (auto it = counts.find(t); it != counts.end() && it->second > 0)
        {
            --it->second;
            ++common;
        }
    if (common == 0)
        return 0.0;
    auto precision = static_cast<double>(common) / static_cast<double>(pred.size());
    auto recall = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

// --- QA --------------------------------------------------------------------------

StepResult qa_step(QaWorld& world, const ActionInvocation& action)
{
    if (action.args.size() != 1)
        return {qa_invalid(action), false};
    auto arg = first_arg(action);

    if (action.name == "Retrieve")
    {
        for (const auto& entry: world.corpus)
        {
            if (text::to_lower(entry.title) != text::to_lower(text::trim(arg)) || entry.paragraphs.empty())
                continue;
            world.last_passage = entry.paragraphs.front();
            world.lookup_keyword.clear();
            world.lookup_cursor = 0;
            return {text::join(entry.paragraphs.front(), " "), false};
        }
        auto similar = std::vector<std::string> {};
        auto queryTokens = keyword_tokens(arg);
        for (const auto& entry: world.corpus)
        {
            auto titleTokens = keyword_tokens(entry.title);
            auto overlap = std::any_of(queryTokens.begin(), queryTokens.end(),
                                       [&](const auto& t) { return has(titleTokens, t); });
            if (icontains(entry.title, arg) || overlap)
                similar.push_back("'" + entry.title + "'");
        }
        return {"Could not find [" + arg + "]. Similar: [" + text::join(similar, ", ") + "].", false};
    }

    if (action.name == "Search")
    {
        auto query = std::set<std::string> {};
        for (auto& t: keyword_tokens(arg))
            if (!kSearchStopwords.contains(t))
                query.insert(std::move(t));

        const std::vector<std::string>* best = nullptr;
        size_t bestScore = 0;
        for (const auto& entry: world.corpus)
        {
            auto titleTokens = keyword_tokens(entry.title);
            for (const auto& paragraph: entry.paragraphs)
            {
                auto words = std::set<std::string>(titleTokens.begin(), titleTokens.end());
                for (const auto& sentence: paragraph)
                    for (auto& t: keyword_tokens(sentence))
                        words.insert(std::move(t));
                size_t score = 0;
                for (const auto& q: query)
                    score += words.contains(q) ? 1 : 0;
                if (score > bestScore)
                {
                    bestScore = score;
                    best = &paragraph;
                }
            }
        }
        if (!best)
            return {"No results found for [" + arg + "].", false};
        world.last_passage = *best;
        world.lookup_keyword.clear();
        world.lookup_cursor = 0;
        return {text::join(*best, " "), false};
    }

    if (action.name == "Lookup")
    {
        if (!world.last_passage)
            return {std::string(kNoPassageYet), false};
        if (text::to_lower(arg) != world.lookup_keyword)
        {
            world.lookup_keyword = text::to_lower(arg);
            world.lookup_cursor = 0;
        }
        auto hits = std::vector<std::string> {};
        for (const auto& sentence: *world.last_passage)
            if (icontains(sentence, arg))
                hits.push_back(sentence);
        if (world.lookup_cursor >= hits.size())
            return {"No more results.", false};
        auto k = world.lookup_cursor++;
        return {"(Result " + std::to_string(k + 1) + " / " + std::to_string(hits.size()) + ") " + hits[k], false};
    }

    if (action.name == "Finish")
    {
        world.answer = arg;
        return {"Answer submitted: " + arg, true};
    }

    return {qa_invalid(action), false};
}

// --- household ---------------------------------------------------------------------

std::string_view to_string(GoalKind kind)
{
    switch (kind)
    {
        case GoalKind::Pick: return "Pick";
        case GoalKind::Light: return "Light";
        case GoalKind::Clean: return "Clean";
        case GoalKind::Heat: return "Heat";
        case GoalKind::Cool: return "Cool";
        case GoalKind::PickTwo: return "PickTwo";
    }
    return "Pick";
}

GoalKind goal_kind_from_string(std::string_view s)
{
    for (auto kind: {GoalKind::Pick, GoalKind::Light, GoalKind::Clean, GoalKind::Heat, GoalKind::Cool, GoalKind::PickTwo})
        if (text::to_lower(to_string(kind)) == text::to_lower(s))
            return kind;
    throw Error(ErrorCode::MalformedDocument, "unknown goal kind '" + std::string(s) + "'");
}

std::map<std::string, std::vector<std::string>> HouseholdWorld::default_preconditions()
{
    return {
        {"Goto", {}},
        {"Open", {"agent_at_receptacle", "receptacle_openable", "receptacle_closed"}},
        {"Take", {"agent_at_receptacle", "receptacle_accessible", "object_in_receptacle", "inventory_empty"}},
        {"Put", {"agent_at_receptacle", "receptacle_accessible", "object_in_inventory"}},
        {"Clean", {"agent_at_receptacle", "object_in_receptacle", "receptacle_affords"}},
        {"Heat", {"agent_at_receptacle", "object_in_receptacle", "receptacle_affords"}},
        {"Cool", {"agent_at_receptacle", "object_in_receptacle", "receptacle_affords"}},
        {"Use", {"agent_at_receptacle"}},
        {"Finish", {}},
    };
}

const std::vector<std::string>& known_preconditions()
{
    static const std::vector<std::string> names {
        "agent_at_receptacle", "receptacle_openable", "receptacle_closed", "receptacle_accessible",
        "object_in_receptacle", "inventory_empty", "object_in_inventory", "receptacle_affords",
    };
    return names;
}

std::string object_class_of(std::string_view name)
{
    auto trimmed = text::trim(name);
    auto space = trimmed.rfind(' ');
    if (space == std::string_view::npos)
        return std::string(trimmed);
    auto suffix = trimmed.substr(space + 1);
    auto numeric = !suffix.empty() && std::all_of(suffix.begin(), suffix.end(), [](unsigned char c) { return std::isdigit(c); });
    return std::string(numeric ? trimmed.substr(0, space) : trimmed);
}

std::pair<std::string, HouseholdWorld> household_step(const HouseholdWorld& world, const ActionInvocation& action)
{
    auto nothing = std::pair<std::string, HouseholdWorld> {std::string(kNothingHappens), world};

    auto args = household_args(action);
    auto rules = world.preconditions.find(action.name);
    if (!args || rules == world.preconditions.end())
        return nothing;
    if (action.name != "Finish" && !world.receptacles.contains(args->receptacle))
        return nothing;
    if (!args->object.empty() && !world.objects.contains(args->object))
        return nothing;
    for (const auto& predicate: rules->second)
        if (!precondition_holds(world, predicate, action.name, *args))
            return nothing;

    auto next = world;
    const auto& rname = args->receptacle;
    const auto& oname = args->object;

    if (action.name == "Goto")
    {
        next.agent_at = rname;
        return {"You arrive at " + rname + ". " + describe(rname, next.receptacles.at(rname)), next};
    }
    if (action.name == "Open")
    {
        auto& r = next.receptacles.at(rname);
        r.open = true;
        return {"You open the " + rname + ". " + describe(rname, r), next};
    }
    if (action.name == "Take")
    {
        erase_value(next.receptacles.at(rname).contents, oname);
        next.inventory.push_back(oname);
        return {"You pick up the " + oname + " from the " + rname + ".", next};
    }
    if (action.name == "Put")
    {
        erase_value(next.inventory, oname);
        next.receptacles.at(rname).contents.push_back(oname);
        return {"You put the " + oname + " in/on the " + rname + ".", next};
    }
    if (action.name == "Clean" || action.name == "Heat" || action.name == "Cool")
    {
        auto& state = next.objects.at(oname);
        if (action.name == "Clean")
            state.clean = true;
        else if (action.name == "Heat")
        {
            state.hot = true;
            state.cold = false;
        }
        else
        {
            state.cold = true;
            state.hot = false;
        }
        return {"You " + text::to_lower(action.name) + " the " + oname + " using the " + rname + ".", next};
    }
    if (action.name == "Use")
    {
        const auto& r = next.receptacles.at(rname);
        if (!has(r.affords, "light"))
            return {"You use the " + rname + ".", next};
        for (const auto& held: next.inventory)
            next.objects.at(held).lit = true;
        for (const auto& inside: r.contents)
            if (auto it = next.objects.find(inside); it != next.objects.end())
                it->second.lit = true;
        return {"You turn on the " + rname + ".", next};
    }
    if (action.name == "Finish")
        return {"You stop.", next};
    return nothing;
}

bool goal_check(const HouseholdWorld& world)
{
    const auto& goal = world.goal;
    auto matchingInTarget = [&](auto&& flagOk) {
        size_t n = 0;
        for (const auto& [rname, r]: world.receptacles)
        {
            if (!receptacle_matches(rname, goal.target_receptacle))
                continue;
            for (const auto& obj: r.contents)
                if (object_class_of(obj) == goal.object_class && flagOk(world.objects.at(obj)))
                    ++n;
        }
        return n;
    };

    switch (goal.kind)
    {
        case GoalKind::Pick: return matchingInTarget([](const ObjectState&) { return true; }) >= 1;
        case GoalKind::Clean: return matchingInTarget([](const ObjectState& s) { return s.clean; }) >= 1;
        case GoalKind::Heat: return matchingInTarget([](const ObjectState& s) { return s.hot; }) >= 1;
        case GoalKind::Cool: return matchingInTarget([](const ObjectState& s) { return s.cold; }) >= 1;
        case GoalKind::PickTwo: return matchingInTarget([](const ObjectState&) { return true; }) >= 2;
        case GoalKind::Light:
            return std::any_of(world.objects.begin(), world.objects.end(), [&](const auto& entry) {
                return object_class_of(entry.first) == goal.object_class && entry.second.lit;
            });
    }
    return false;
}

// --- scenarios ---------------------------------------------------------------------

namespace
{

QaWorld qa_world_from_json(const Json& doc)
{
    auto world = QaWorld {};
    world.gold_answer = doc.at("gold_answer").get<std::string>();
    for (const auto& [title, paragraphs]: doc.at("corpus").items())
    {
        auto entry = CorpusEntry {.title = title, .paragraphs = {}};
        for (const auto& p: paragraphs)
            entry.paragraphs.push_back(p.get<std::vector<std::string>>());
        world.corpus.push_back(std::move(entry));
    }
    return world;
}

HouseholdWorld household_world_from_json(const Json& doc)
{
    auto world = HouseholdWorld {};
    const auto& w = doc.at("world");
    for (const auto& [name, r]: w.at("receptacles").items())
    {
        auto rec = Receptacle {};
        rec.openable = r.value("openable", false);
        rec.open = r.value("open", !rec.openable);
        rec.contents = r.value("contents", std::vector<std::string> {});
        rec.affords = r.value("affords", std::vector<std::string> {});
        for (const auto& obj: rec.contents)
        {
            if (world.objects.contains(obj))
                throw Error(ErrorCode::MalformedDocument, "object '" + obj + "' appears in two receptacles");
            world.objects.emplace(obj, ObjectState {});
        }
        world.receptacles.emplace(name, std::move(rec));
    }
    if (auto it = w.find("agent_at"); it != w.end() && it->is_string())
        world.agent_at = it->get<std::string>();
    world.inventory = w.value("inventory", std::vector<std::string> {});
    for (const auto& obj: world.inventory)
        world.objects.emplace(obj, ObjectState {});
    if (world.inventory.size() > 1)
        throw Error(ErrorCode::MalformedDocument, "inventory holds at most one object");

    const auto& g = doc.at("goal");
    world.goal = TaskGoal {
        .kind = goal_kind_from_string(g.at("kind").get<std::string>()),
        .object_class = g.at("object_class").get<std::string>(),
        .target_receptacle = g.value("target_receptacle", std::string {}),
    };
    return world;
}

class QaEnvironment final : public Environment
{
public:
    explicit QaEnvironment(QaWorld world): _world(std::move(world)) {}

    StepResult step(const ActionInvocation& action) override { return qa_step(_world, action); }

    [[nodiscard]] Outcome outcome() const override
    {
        auto out = Outcome {};
        if (_world.answer)
        {
            out.answer = _world.answer;
            out.reward = f1_score(*_world.answer, _world.gold_answer);
            out.success = out.reward >= 1.0;
        }
        return out;
    }

private:
    QaWorld _world;
};

class HouseholdEnvironment final : public Environment
{
public:
    explicit HouseholdEnvironment(HouseholdWorld world): _world(std::move(world)) {}

    StepResult step(const ActionInvocation& action) override
    {
        auto [observation, next] = household_step(_world, action);
        _world = std::move(next);
        return {std::move(observation), goal_check(_world) || action.name == "Finish"};
    }

    [[nodiscard]] Outcome outcome() const override
    {
        auto success = goal_check(_world);
        return Outcome {.reward = success ? 1.0 : 0.0, .success = success, .answer = std::nullopt};
    }

private:
    HouseholdWorld _world;
};

} // namespace

Scenario scenario_from_json(const Json& doc)
{
    try
    {
        auto scenario = Scenario {};
        scenario.task_id = doc.at("task_id").get<std::string>();
        scenario.gold_script = doc.value("gold_script", std::vector<std::string> {});
        auto type = doc.at("type").get<std::string>();
        if (type == "qa")
        {
            scenario.task_text = doc.at("question").get<std::string>();
            scenario.world = qa_world_from_json(doc);
        }
        else if (type == "household")
        {
            scenario.task_text = doc.at("task_text").get<std::string>();
            scenario.world = household_world_from_json(doc);
        }
        else
            throw Error(ErrorCode::MalformedDocument, "unknown scenario type '" + type + "'");
        return scenario;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorCode::MalformedDocument, std::string("scenario: ") + e.what());
    }
}

std::vector<Scenario> load_scenarios(const std::string& path)
{
    auto out = std::vector<Scenario> {};
    size_t lineNo = 0;
    for (const auto& line: text::split_lines(text::read_file(path)))
    {
        ++lineNo;
        if (text::trim(line).empty())
            continue;
        auto doc = Json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw Error(ErrorCode::MalformedDocument, path + ":" + std::to_string(lineNo) + ": not valid JSON");
        out.push_back(scenario_from_json(doc));
    }
    return out;
}

std::unique_ptr<Environment> make_environment(const Scenario& scenario, const ActionKnowledge* kb)
{
    if (const auto* qa = std::get_if<QaWorld>(&scenario.world))
        return std::make_unique<QaEnvironment>(*qa);

    auto world = std::get<HouseholdWorld>(scenario.world);
    if (kb)
        for (const auto& spec: kb->actions())
            if (!spec.preconditions.empty())
                world.preconditions[spec.name] = spec.preconditions;
    return std::make_unique<HouseholdEnvironment>(std::move(world));
}

} // namespace knowagent
