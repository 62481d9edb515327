// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowagent/action_kb.hpp"
#include "knowagent/agent_runtime.hpp"
#include "knowagent/trajectory.hpp"
#include "knowagent/validator.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace knowagent
{

// --- manifests ---------------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::string& path);

struct ArtifactDigest
{
    std::string path;
    std::string sha256;
};

struct RunManifest
{
    std::string command;
    Json config = Json::object();
    std::vector<ArtifactDigest> inputs;
    std::vector<ArtifactDigest> outputs;
    std::string started_at;
    std::string finished_at;
    std::optional<int64_t> seed;
};

/// UTC, second resolution, ISO 8601.
std::string utc_timestamp();

ArtifactDigest digest_of(const std::string& path);
Json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const Json& doc);
void write_manifest(const RunManifest& manifest, const std::string& path);

struct DigestCheck
{
    std::string path;
    std::string expected;
    std::string actual; // empty when the file is missing
    [[nodiscard]] bool ok() const { return expected == actual; }
};

std::vector<DigestCheck> verify_manifest(const RunManifest& manifest);

// --- reports -----------------------------------------------------------------------

struct CorpusReport
{
    std::string label;
    std::vector<Trajectory> trajectories;
    std::vector<ValidationReport> reports;
    BatchMetrics metrics;
};

/// Throws Error(EmptyInput) when there are no corpora or a corpus is empty.
std::vector<CorpusReport> build_report(const ActionKnowledge& kb, const std::vector<std::string>& labels,
                                       const std::vector<std::vector<Trajectory>>& corpora);

/// Rate table, per-task results and side-by-side exemplars of flagged steps.
std::string render_report_text(const ActionKnowledge& kb, const std::vector<CorpusReport>& corpora,
                               size_t max_exemplars = 5);
Json report_to_json(const ActionKnowledge& kb, const std::vector<CorpusReport>& corpora);

// --- command line ------------------------------------------------------------------

/// Entry point of the `knowagent` binary. Errors are reported on `err` as a single
/// `error: <CODE>: <message>` line with exit status 1.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace knowagent
