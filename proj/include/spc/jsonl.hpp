#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spc/core.hpp"

namespace spc {

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
// Pretty-printed with sorted keys and a trailing newline, so equal values give
// byte-identical files.
void write_json_file(const std::filesystem::path& path, const json& value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

template <typename T>
std::vector<json> to_json_lines(const std::vector<T>& items) {
  std::vector<json> out;
  out.reserve(items.size());
  for (const auto& it : items) out.emplace_back(it);
  return out;
}

template <typename T>
std::vector<T> from_json_lines(const std::vector<json>& lines) {
  std::vector<T> out;
  out.reserve(lines.size());
  for (const auto& j : lines) out.push_back(j.get<T>());
  return out;
}

}  // namespace spc
