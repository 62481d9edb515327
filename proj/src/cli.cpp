// SPDX-License-Identifier: Apache-2.0
#include "knowagent/cli_report.hpp"

#include "knowagent/distill.hpp"
#include "knowagent/error.hpp"
#include "knowagent/self_learning.hpp"
#include "knowagent/text.hpp"

#include <CLI11.hpp>

#include <filesystem>

namespace fs = std::filesystem;

namespace knowagent
{

namespace
{

struct RunOptions
{
    std::string kb;
    std::string scenarios;
    std::string policy = "gold";
    std::string enforcement = "off";
    std::optional<size_t> max_steps;
    size_t retries = 3;
    std::optional<int64_t> seed;
    double temperature = 0.0;
    size_t parallelism = 1;
    std::string out;
};

struct SelfLearnOptions
{
    std::string config;
    std::string out;
    std::optional<double> epsilon;
    std::optional<double> tau;
    std::string tune_cmd;
    std::optional<size_t> max_iterations;
    std::string policy;
    std::string enforcement;
    std::optional<size_t> max_steps;
    std::optional<size_t> retries;
    std::optional<int64_t> seed;
    std::optional<size_t> parallelism;
};

std::string plural(size_t n, const std::string& word)
{
    return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

Json load_json_file(const std::string& path)
{
    auto doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded())
        throw Error(ErrorCode::MalformedDocument, path + ": not valid JSON");
    return doc;
}

std::optional<std::string> scripted_path(std::string_view policy)
{
    if (text::starts_with(policy, "scripted:"))
        return std::string(policy.substr(9));
    return std::nullopt;
}

EpisodeConfig episode_config(const std::string& enforcement, std::optional<size_t> max_steps, size_t retries,
                             std::optional<int64_t> seed, double temperature)
{
    auto config = EpisodeConfig {};
    config.enforcement = enforcement_from_string(enforcement);
    config.max_steps = max_steps;
    config.max_retries = retries;
    config.sampling.seed = seed;
    config.sampling.temperature = temperature;
    return config;
}

// --- kb ---

int cmd_kb_validate(const std::string& path, std::ostream& out)
{
    auto doc = load_json_file(path);
    auto def = parse_kb_definition(doc);
    auto checks = check_invariants(def);
    auto ok = std::all_of(checks.begin(), checks.end(), [](const InvariantResult& r) { return r.ok; });
    if (ok)
    {
        auto kb = ActionKnowledge(def);
        out << plural(kb.actions().size(), "action") << ", " << plural(kb.terminals().size(), "terminal")
            << ", reachable: yes\n";
    }
    for (const auto& c: checks)
        out << (c.ok ? "  ok    " : "  FAIL  ") << c.name << (c.ok ? "" : ": " + c.detail) << "\n";
    if (!ok)
        ActionKnowledge {def};
    return 0;
}

int cmd_kb_render(const std::string& path, const std::string& section, const std::string& outPath, std::ostream& out)
{
    auto kb = load_kb(path);
    auto rendered = std::string {};
    if (section == "knowledge")
        rendered = render_knowledge_text(kb) + "\n";
    else if (section == "system")
        rendered = render_system_prompt(build_template(kb));
    else
        throw Error(ErrorCode::Usage, "unknown section '" + section + "' (system, knowledge)");
    if (outPath.empty())
        out << rendered;
    else
        text::write_file(outPath, rendered);
    return 0;
}

int cmd_kb_distill(const std::string& policyId, const std::string& taskId, std::string description,
                   const std::string& descriptionFile, const std::string& refined, const std::string& outDir,
                   std::ostream& out)
{
    if (!descriptionFile.empty())
        description = text::read_file(descriptionFile);
    auto policy = make_policy(policyId);
    auto draft = refined.empty()
                     ? distill_stage1(*policy, taskId, description, outDir)
                     : distill_stage2(*policy, parse_kb_definition(load_json_file(refined)), description, outDir);
    auto failing = std::count_if(draft.checks.begin(), draft.checks.end(), [](const InvariantResult& r) { return !r.ok; });
    out << "stage " << (refined.empty() ? 1 : 2) << ": " << plural(draft.definition.actions.size(), "action") << ", "
        << plural(draft.definition.rules.size(), "rule") << ", " << failing << " failing invariant(s)\n";
    out << "wrote " << (fs::path(outDir) / (refined.empty() ? "draft.kb.json" : "candidate.kb.json")).string() << " and "
        << (fs::path(outDir) / "review_checklist.md").string() << "\n";
    return 0;
}

// --- run ---

int cmd_run(const RunOptions& o, std::ostream& out)
{
    auto manifest = RunManifest {};
    manifest.command = "run";
    manifest.started_at = utc_timestamp();
    manifest.seed = o.seed;

    auto kb = load_kb(o.kb);
    auto scenarios = load_scenarios(o.scenarios);
    auto policy = make_policy(o.policy, &kb, scenarios);
    auto config = episode_config(o.enforcement, o.max_steps, o.retries, o.seed, o.temperature);

    auto batch = run_batch(scenarios, kb, *policy, config, o.parallelism);

    auto dir = fs::path(o.out);
    auto trajPath = (dir / "trajectories.jsonl").string();
    auto metricsPath = (dir / "metrics.json").string();
    write_trajectories(trajPath, batch.trajectories);
    text::write_file(metricsPath, to_json(batch.metrics).dump(2) + "\n");

    manifest.config = Json {{"kb", o.kb},
                            {"scenarios", o.scenarios},
                            {"policy", o.policy},
                            {"enforcement", std::string(to_string(config.enforcement))},
                            {"max_steps", o.max_steps ? Json(*o.max_steps) : Json()},
                            {"retries", o.retries},
                            {"temperature", o.temperature},
                            {"parallelism", o.parallelism},
                            {"out", o.out}};
    manifest.inputs = {digest_of(o.kb), digest_of(o.scenarios)};
    if (auto script = scripted_path(o.policy))
        manifest.inputs.push_back(digest_of(*script));
    manifest.outputs = {digest_of(trajPath), digest_of(metricsPath)};
    manifest.finished_at = utc_timestamp();
    write_manifest(manifest, (dir / "manifest.json").string());

    const auto& m = batch.metrics;
    out << m.episodes << " episodes, " << m.failed << " failed, " << (m.metric == "f1" ? "mean F1 " : "mean reward ")
        << m.mean_reward << ", success rate " << m.success_rate << ", invalid rate " << m.rates.invalid_rate
        << ", misordered rate " << m.rates.misordered_rate << ", retries " << m.retries << "\n";
    return 0;
}

int cmd_validate_file(const std::string& kbPath, const std::string& file, std::ostream& out)
{
    auto kb = load_kb(kbPath);
    auto trajectories = read_trajectories(file);
    if (trajectories.empty())
        throw Error(ErrorCode::EmptyInput, file + ": no trajectories");
    auto reports = std::vector<ValidationReport> {};
    auto perTrajectory = Json::array();
    for (const auto& t: trajectories)
    {
        reports.push_back(validate_trajectory(kb, t));
        auto item = to_json(reports.back());
        item["task_id"] = t.task_id;
        perTrajectory.push_back(std::move(item));
    }
    auto doc = Json {{"kb", kb.task_id()}, {"file", file}, {"rates", to_json(compute_rates(reports))},
                     {"trajectories", std::move(perTrajectory)}};
    out << doc.dump(2) << "\n";
    return 0;
}

// --- selflearn ---

std::string resolve_relative(const fs::path& base, const std::string& value)
{
    if (value.empty() || fs::path(value).is_absolute())
        return value;
    return (base / value).lexically_normal().string();
}

std::string resolve_policy(const fs::path& base, const std::string& policy)
{
    if (auto script = scripted_path(policy))
        return "scripted:" + resolve_relative(base, *script);
    return policy;
}

std::string resolve_command(const fs::path& base, const std::string& command)
{
    auto trimmed = std::string(text::trim(command));
    auto space = trimmed.find(' ');
    auto program = trimmed.substr(0, space);
    if (program.find('/') == std::string::npos || fs::path(program).is_absolute())
        return trimmed;
    return resolve_relative(base, program) + (space == std::string::npos ? "" : trimmed.substr(space));
}

int cmd_selflearn(const SelfLearnOptions& o, std::ostream& out)
{
    auto cfg = load_json_file(o.config);
    auto base = fs::path(o.config).parent_path();
    auto str = [&](const char* key) { return cfg.value(key, std::string {}); };

    auto kbPath = resolve_relative(base, str("kb"));
    if (kbPath.empty())
        throw Error(ErrorCode::Usage, o.config + ": 'kb' is required");
    auto kb = load_kb(kbPath);

    auto config = LoopConfig {};
    auto trainPath = resolve_relative(base, str("train"));
    auto testPath = resolve_relative(base, str("test"));
    if (trainPath.empty() || testPath.empty())
        throw Error(ErrorCode::Usage, o.config + ": 'train' and 'test' scenario files are required");
    config.train = load_scenarios(trainPath);
    config.test = load_scenarios(testPath);
    config.epsilon = o.epsilon.value_or(cfg.value("epsilon", kDefaultEpsilon));
    config.tau = o.tau.value_or(cfg.value("tau", kDefaultTau));
    config.max_iterations = o.max_iterations.value_or(cfg.value("max_iterations", kDefaultMaxIterations));
    config.tune_command = o.tune_cmd.empty() ? resolve_command(base, str("tune_cmd")) : o.tune_cmd;
    config.base_policy = o.policy.empty() ? resolve_policy(base, str("base_policy")) : o.policy;
    config.out_dir = o.out.empty() ? resolve_relative(base, str("out")) : o.out;
    if (config.out_dir.empty())
        throw Error(ErrorCode::Usage, "an output directory is required (--out or 'out')");
    if (config.base_policy.empty())
        throw Error(ErrorCode::Usage, "a base policy is required (--policy or 'base_policy')");
    if (config.tune_command.empty())
        throw Error(ErrorCode::TuneHookMissing, "no tune hook configured (--tune-cmd or 'tune_cmd')");

    auto seed = o.seed;
    if (!seed && cfg.contains("seed") && cfg["seed"].is_number_integer())
        seed = cfg["seed"].get<int64_t>();
    auto maxSteps = o.max_steps;
    if (!maxSteps && cfg.contains("max_steps") && cfg["max_steps"].is_number_unsigned())
        maxSteps = cfg["max_steps"].get<size_t>();
    config.episode = episode_config(o.enforcement.empty() ? cfg.value("enforcement", std::string("off")) : o.enforcement,
                                    maxSteps, o.retries.value_or(cfg.value("retries", size_t {3})), seed,
                                    cfg.value("temperature", 0.0));
    config.parallelism = o.parallelism.value_or(cfg.value("parallelism", size_t {1}));

    auto manifest = RunManifest {};
    manifest.command = "selflearn";
    manifest.started_at = utc_timestamp();
    manifest.seed = seed;

    auto result = self_learning_loop(kb, config);
    auto table = summary_table(result);
    auto root = fs::path(config.out_dir);
    text::write_file((root / "summary.txt").string(), table);

    manifest.config = Json {{"kb", kbPath},
                            {"train", trainPath},
                            {"test", testPath},
                            {"base_policy", config.base_policy},
                            {"tune_cmd", config.tune_command},
                            {"epsilon", config.epsilon},
                            {"tau", config.tau},
                            {"max_iterations", config.max_iterations},
                            {"enforcement", std::string(to_string(config.episode.enforcement))},
                            {"parallelism", config.parallelism},
                            {"out", config.out_dir}};
    manifest.inputs = {digest_of(o.config), digest_of(kbPath), digest_of(trainPath), digest_of(testPath)};
    for (const auto& r: result.iterations)
        for (const auto* name: {"trajectories.jsonl", "dataset.jsonl", "report.json"})
            manifest.outputs.push_back(digest_of((root / "iterations" / std::to_string(r.index) / name).string()));
    manifest.outputs.push_back(digest_of((root / "summary.json").string()));
    manifest.finished_at = utc_timestamp();
    write_manifest(manifest, (root / "manifest.json").string());

    out << table;
    return 0;
}

// --- report ---

int cmd_report(const std::string& kbPath, const std::vector<std::string>& files, const std::vector<std::string>& labels,
               const std::string& outDir, size_t exemplars, std::ostream& out)
{
    auto kb = load_kb(kbPath);
    if (files.empty())
        throw Error(ErrorCode::EmptyInput, "no trajectory files given");
    auto corpora = std::vector<std::vector<Trajectory>> {};
    auto names = labels;
    for (size_t i = 0; i < files.size(); ++i)
    {
        corpora.push_back(read_trajectories(files[i]));
        if (i >= names.size())
            names.push_back(fs::path(files[i]).parent_path().filename().string().empty()
                                ? fs::path(files[i]).stem().string()
                                : fs::path(files[i]).parent_path().filename().string());
    }
    auto report = build_report(kb, names, corpora);
    auto textReport = render_report_text(kb, report, exemplars);
    if (!outDir.empty())
    {
        text::write_file((fs::path(outDir) / "report.txt").string(), textReport);
        text::write_file((fs::path(outDir) / "report.json").string(), report_to_json(kb, report).dump(2) + "\n");
    }
    out << textReport;
    return 0;
}

// --- manifest ---

int cmd_manifest_verify(const std::string& path, std::ostream& out)
{
    auto manifest = manifest_from_json(load_json_file(path));
    auto checks = verify_manifest(manifest);
    size_t bad = 0;
    for (const auto& c: checks)
    {
        out << (c.ok() ? "  ok        " : (c.actual.empty() ? "  missing   " : "  mismatch  ")) << c.path << "\n";
        bad += c.ok() ? 0 : 1;
    }
    if (bad > 0)
        throw Error(ErrorCode::Io, std::to_string(bad) + " of " + std::to_string(checks.size()) + " artifact digest(s) differ");
    out << checks.size() << " artifact(s) verified\n";
    return 0;
}

void add_run_flags(CLI::App& app, RunOptions& o)
{
    app.add_option("--kb", o.kb, "action knowledge document")->required();
    app.add_option("--scenarios", o.scenarios, "scenario file (JSON Lines)")->required();
    app.add_option("--policy", o.policy, "scripted:<path>, http:<url>, gold, or a model name");
    app.add_option("--enforcement", o.enforcement, "off, warn or reject-retry");
    app.add_option("--max-steps", o.max_steps, "step limit per episode");
    app.add_option("--retries", o.retries, "retries per rejected step");
    app.add_option("--seed", o.seed, "sampling seed");
    app.add_option("--temperature", o.temperature, "sampling temperature");
    app.add_option("--parallelism", o.parallelism, "concurrent episodes");
    app.add_option("--out", o.out, "output directory")->required();
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    auto app = CLI::App {"Action-knowledge constrained agent planning toolkit", "knowagent"};
    app.require_subcommand(1);

    auto* kb = app.add_subcommand("kb", "action knowledge tooling");
    kb->require_subcommand(1);
    auto kbPath = std::string {};
    auto* kbValidate = kb->add_subcommand("validate", "load a KB and print its invariant results");
    kbValidate->add_option("kb", kbPath)->required();

    auto section = std::string("system");
    auto renderOut = std::string {};
    auto* kbRender = kb->add_subcommand("render", "render the planning prompt of a KB");
    kbRender->add_option("kb", kbPath)->required();
    kbRender->add_option("--section", section, "system or knowledge");
    kbRender->add_option("--out", renderOut, "write to a file instead of stdout");

    auto distillPolicy = std::string {};
    auto distillTask = std::string {};
    auto description = std::string {};
    auto descriptionFile = std::string {};
    auto refined = std::string {};
    auto distillOut = std::string {};
    auto* kbDistill = kb->add_subcommand("distill", "draft a KB with a policy (stage 2 with --refined)");
    kbDistill->add_option("--policy", distillPolicy)->required();
    kbDistill->add_option("--task-id", distillTask)->required();
    kbDistill->add_option("--description", description);
    kbDistill->add_option("--description-file", descriptionFile);
    kbDistill->add_option("--refined", refined, "human-refined stage 1 draft");
    kbDistill->add_option("--out", distillOut)->required();

    auto runOptions = RunOptions {};
    auto* run = app.add_subcommand("run", "run episodes and write trajectories, metrics and a manifest");
    add_run_flags(*run, runOptions);

    auto vfKb = std::string {};
    auto vfFile = std::string {};
    auto* validateFile = app.add_subcommand("validate-file", "validate a trajectory file against a KB");
    validateFile->add_option("file", vfFile)->required();
    validateFile->add_option("--kb", vfKb)->required();

    auto sl = SelfLearnOptions {};
    auto* selflearn = app.add_subcommand("selflearn", "run the knowledgeable self-learning loop");
    selflearn->add_option("--config", sl.config, "loop configuration (JSON)")->required();
    selflearn->add_option("--out", sl.out);
    selflearn->add_option("--epsilon", sl.epsilon);
    selflearn->add_option("--tau", sl.tau);
    selflearn->add_option("--tune-cmd", sl.tune_cmd);
    selflearn->add_option("--max-iterations", sl.max_iterations);
    selflearn->add_option("--policy", sl.policy);
    selflearn->add_option("--enforcement", sl.enforcement);
    selflearn->add_option("--max-steps", sl.max_steps);
    selflearn->add_option("--retries", sl.retries);
    selflearn->add_option("--seed", sl.seed);
    selflearn->add_option("--parallelism", sl.parallelism);

    auto reportKb = std::string {};
    auto reportFiles = std::vector<std::string> {};
    auto reportLabels = std::vector<std::string> {};
    auto reportOut = std::string {};
    size_t exemplars = 5;
    auto* report = app.add_subcommand("report", "rate table, per-task results and violation exemplars");
    report->add_option("files", reportFiles, "trajectory files, one corpus each")->required();
    report->add_option("--kb", reportKb)->required();
    report->add_option("--label", reportLabels, "corpus label, once per file");
    report->add_option("--out", reportOut);
    report->add_option("--exemplars", exemplars, "exemplars per corpus");

    auto manifestPath = std::string {};
    auto* manifest = app.add_subcommand("manifest", "run manifests");
    manifest->require_subcommand(1);
    auto* verify = manifest->add_subcommand("verify", "recompute and compare artifact digests");
    verify->add_option("manifest", manifestPath)->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp&)
    {
        out << app.help();
        return 0;
    }
    catch (const CLI::CallForAllHelp&)
    {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    }
    catch (const CLI::ParseError& e)
    {
        err << "error: " << to_string(ErrorCode::Usage) << ": " << e.what() << "\n";
        return 1;
    }

    try
    {
        if (kbValidate->parsed())
            return cmd_kb_validate(kbPath, out);
        if (kbRender->parsed())
            return cmd_kb_render(kbPath, section, renderOut, out);
        if (kbDistill->parsed())
            return cmd_kb_distill(distillPolicy, distillTask, description, descriptionFile, refined, distillOut, out);
        if (run->parsed())
            return cmd_run(runOptions, out);
        if (validateFile->parsed())
            return cmd_validate_file(vfKb, vfFile, out);
        if (selflearn->parsed())
            return cmd_selflearn(sl, out);
        if (report->parsed())
            return cmd_report(reportKb, reportFiles, reportLabels, reportOut, exemplars, out);
        if (verify->parsed())
            return cmd_manifest_verify(manifestPath, out);
    }
    catch (const Error& e)
    {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    }
    catch (const std::exception& e)
    {
        err << "error: " << to_string(ErrorCode::Io) << ": " << e.what() << "\n";
        return 1;
    }
    err << "error: " << to_string(ErrorCode::Usage) << ": no command given\n";
    return 1;
}

} // namespace knowagent
