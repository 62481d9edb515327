// SPDX-License-Identifier: Apache-2.0
#include "knowagent/cli_report.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>

namespace knowagent
{

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    auto out = std::string {};
    for (unsigned int i = 0; i < len; ++i)
    {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string file_sha256(const std::string& path)
{
    return sha256_hex(text::read_file(path));
}

std::string utc_timestamp()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm {};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ArtifactDigest digest_of(const std::string& path)
{
    return ArtifactDigest {path, file_sha256(path)};
}

namespace
{

Json digests_to_json(const std::vector<ArtifactDigest>& digests)
{
    auto arr = Json::array();
    for (const auto& d: digests)
        arr.push_back(Json {{"path", d.path}, {"sha256", d.sha256}});
    return arr;
}

std::vector<ArtifactDigest> digests_from_json(const Json& arr)
{
    auto out = std::vector<ArtifactDigest> {};
    for (const auto& item: arr)
        out.push_back(ArtifactDigest {item.at("path").get<std::string>(), item.at("sha256").get<std::string>()});
    return out;
}

} // namespace

Json to_json(const RunManifest& m)
{
    auto doc = Json::object();
    doc["command"] = m.command;
    doc["config"] = m.config;
    doc["inputs"] = digests_to_json(m.inputs);
    doc["outputs"] = digests_to_json(m.outputs);
    doc["started_at"] = m.started_at;
    doc["finished_at"] = m.finished_at;
    doc["seed"] = m.seed ? Json(*m.seed) : Json();
    return doc;
}

RunManifest manifest_from_json(const Json& doc)
{
    try
    {
        auto m = RunManifest {};
        m.command = doc.at("command").get<std::string>();
        m.config = doc.value("config", Json::object());
        m.inputs = digests_from_json(doc.at("inputs"));
        m.outputs = digests_from_json(doc.at("outputs"));
        m.started_at = doc.value("started_at", "");
        m.finished_at = doc.value("finished_at", "");
        if (doc.contains("seed") && doc["seed"].is_number_integer())
            m.seed = doc["seed"].get<int64_t>();
        return m;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorCode::MalformedDocument, std::string("manifest: ") + e.what());
    }
}

void write_manifest(const RunManifest& manifest, const std::string& path)
{
    text::write_file(path, to_json(manifest).dump(2) + "\n");
}

std::vector<DigestCheck> verify_manifest(const RunManifest& manifest)
{
    auto checks = std::vector<DigestCheck> {};
    for (const auto* list: {&manifest.inputs, &manifest.outputs})
        for (const auto& d: *list)
        {
            auto actual = std::filesystem::exists(d.path) ? file_sha256(d.path) : std::string {};
            checks.push_back(DigestCheck {d.path, d.sha256, actual});
        }
    return checks;
}

} // namespace knowagent
