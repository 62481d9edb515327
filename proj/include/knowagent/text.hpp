// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace knowagent::text
{

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, std::string_view sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);
std::string to_lower(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

} // namespace knowagent::text
