// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace knowagent
{

enum class ErrorCode
{
    MalformedDocument,
    InconsistentKb,
    BudgetExceeded,
    PolicyUnavailable,
    UnparsableDraft,
    MissingSegment,
    EmptyInput,
    EmptyStore,
    TuneHookMissing,
    TuneHookFailure,
    Io,
    Usage,
};

/// Machine-parsable upper-case code, e.g. "INCONSISTENT_KB".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& message): std::runtime_error(message), _code(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return _code; }

private:
    ErrorCode _code;
};

} // namespace knowagent
