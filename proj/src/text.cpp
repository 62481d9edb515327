// SPDX-License-Identifier: Apache-2.0
#include "knowagent/text.hpp"

#include "knowagent/error.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace knowagent
{

std::string_view to_string(ErrorCode code)
{
    switch (code)
    {
        case ErrorCode::MalformedDocument: return "MALFORMED_DOCUMENT";
        case ErrorCode::InconsistentKb: return "INCONSISTENT_KB";
        case ErrorCode::BudgetExceeded: return "BUDGET_EXCEEDED";
        case ErrorCode::PolicyUnavailable: return "POLICY_UNAVAILABLE";
        case ErrorCode::UnparsableDraft: return "UNPARSABLE_DRAFT";
        case ErrorCode::MissingSegment: return "MISSING_SEGMENT";
        case ErrorCode::EmptyInput: return "EMPTY_INPUT";
        case ErrorCode::EmptyStore: return "EMPTY_STORE";
        case ErrorCode::TuneHookMissing: return "TUNE_HOOK_MISSING";
        case ErrorCode::TuneHookFailure: return "TUNE_HOOK_FAILED";
        case ErrorCode::Io: return "IO_ERROR";
        case ErrorCode::Usage: return "USAGE";
    }
    return "UNKNOWN";
}

namespace text
{

std::string_view trim(std::string_view s)
{
    auto isSpace = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && isSpace(s.front()))
        s.remove_prefix(1);
    while (!s.empty() && isSpace(s.back()))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view s, std::string_view sep)
{
    auto parts = std::vector<std::string> {};
    if (sep.empty())
    {
        parts.emplace_back(s);
        return parts;
    }
    size_t pos = 0;
    while (true)
    {
        auto next = s.find(sep, pos);
        if (next == std::string_view::npos)
        {
            parts.emplace_back(s.substr(pos));
            break;
        }
        parts.emplace_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return parts;
}

std::vector<std::string> split_lines(std::string_view s)
{
    auto lines = split(s, "\n");
    for (auto& line: lines)
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    auto out = std::string {};
    for (size_t i = 0; i < parts.size(); ++i)
    {
        if (i > 0)
            out += sep;
        out += parts[i];
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string to_lower(std::string_view s)
{
    auto out = std::string(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string read_file(const std::string& path)
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path);
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, std::string_view content)
{
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::Io, "cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

} // namespace text
} // namespace knowagent
