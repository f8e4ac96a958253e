#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spc/core.hpp"

namespace spc {

using TemplateFields = std::map<std::string, std::string>;

// Plain-text template with named placeholders {problem}, {prefix}, {step}.
// Any other brace text (e.g. \boxed{...}) is literal.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string text);

  const std::string& text() const { return text_; }
  const std::vector<std::string>& fields() const { return fields_; }

  // Throws TemplateFieldMissing naming the first absent field.
  std::string render(const TemplateFields& values) const;

  // Inverse of render: recovers placeholder values from a rendered string.
  // nullopt when the literal parts do not line up.
  std::optional<TemplateFields> extract(std::string_view rendered) const;

  static bool is_placeholder_name(std::string_view name);

 private:
  struct Piece {
    bool is_field;
    std::string value;  // literal text or field name
  };
  std::string text_;
  std::vector<Piece> pieces_;
  std::vector<std::string> fields_;
};

struct RolePrompt {
  std::string system;
  PromptTemplate user;
};

struct PromptSet {
  RolePrompt solver;
  RolePrompt sneaky;
  RolePrompt critic;

  const RolePrompt& for_role(Role role) const;

  static PromptSet defaults();
  // Reads <role>.system.txt and <role>.user.txt for each role. A missing file
  // raises IoError naming the file.
  static PromptSet load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  static std::vector<std::string> required_files();
};

inline constexpr std::string_view kEmptyPrefix = "(no previous steps)";

std::string render_prefix(const std::vector<Step>& prefix);
std::vector<Step> parse_prefix(std::string_view rendered);

TemplateFields make_fields(const Problem& problem, const std::vector<Step>& prefix);
TemplateFields make_fields(const Problem& problem, const std::vector<Step>& prefix,
                           const Step& step);

}  // namespace spc
