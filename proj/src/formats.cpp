#include "spc/formats.hpp"

#include <cctype>
#include <vector>

namespace spc {

void to_json(json& j, const SneakyTransformation& s) {
  j = json{{"error_type", to_string(s.error_type)},
           {"transformation", s.transformation},
           {"sneaky_step", s.sneaky_step},
           {"raw_output", s.raw_output}};
  j["logprob"] = s.logprob ? json(*s.logprob) : json(nullptr);
}

void from_json(const json& j, SneakyTransformation& s) {
  s.error_type = parse_error_type(j.at("error_type").get<std::string>());
  s.transformation = j.at("transformation").get<std::string>();
  s.sneaky_step = j.at("sneaky_step").get<std::string>();
  s.raw_output = j.value("raw_output", "");
  s.logprob.reset();
  if (j.contains("logprob") && !j["logprob"].is_null()) s.logprob = j["logprob"].get<double>();
}

namespace {

std::optional<std::size_t> find_header(std::string_view text, std::string_view header,
                                       std::size_t from = 0) {
  auto lower = to_lower(text);
  auto h = to_lower(header);
  auto pos = lower.find(h, from);
  while (pos != std::string::npos) {
    if (pos == 0 || text[pos - 1] == '\n') return pos;
    pos = lower.find(h, pos + 1);
  }
  return std::nullopt;
}

}  // namespace

SneakyTransformation parse_sneaky_output(std::string_view text) {
  auto et = find_header(text, kErrorTypeHeader);
  if (!et) throw SpcError(ErrorCode::ParseFailure, "sneaky output has no error-type header");
  auto tr = find_header(text, kTransformationHeader, *et);
  if (!tr) throw SpcError(ErrorCode::ParseFailure, "sneaky output has no transformation header");
  auto st = find_header(text, kSneakyStepHeader, *tr);
  if (!st) throw SpcError(ErrorCode::ParseFailure, "sneaky output has no sneaky-step header");

  auto type_text = trim(text.substr(*et + kErrorTypeHeader.size(),
                                    *tr - *et - kErrorTypeHeader.size()));
  auto type = try_parse_error_type(type_text);
  if (!type) throw SpcError(ErrorCode::ParseFailure, "unknown error type: " + type_text);

  SneakyTransformation out;
  out.error_type = *type;
  out.transformation = trim(text.substr(*tr + kTransformationHeader.size(),
                                        *st - *tr - kTransformationHeader.size()));
  out.sneaky_step = trim(text.substr(*st + kSneakyStepHeader.size()));
  out.raw_output = std::string(text);
  if (out.sneaky_step.empty())
    throw SpcError(ErrorCode::ParseFailure, "sneaky output has an empty sneaky step");
  return out;
}

std::string format_sneaky_output(ErrorType type, std::string_view transformation,
                                 std::string_view sneaky_step) {
  std::string out;
  out += kErrorTypeHeader;
  out += " ";
  out += to_string(type);
  out += "\n";
  out += kTransformationHeader;
  out += " ";
  out += transformation;
  out += "\n";
  out += kSneakyStepHeader;
  out += " ";
  out += sneaky_step;
  return out;
}

namespace {

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool boundary = c == '!' || c == '?' || c == '\n' ||
                    (c == '.' && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))));
    if (boundary) {
      if (!trim(cur).empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(cur);
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool is_negation(const std::string& w) {
  return w == "not" || w == "never" || (w.size() > 3 && w.ends_with("n't"));
}

}  // namespace

std::optional<StepVerdict> parse_verdict_sentence(std::string_view text) {
  auto sentences = split_sentences(text);
  for (auto it = sentences.rbegin(); it != sentences.rend(); ++it) {
    auto ws = words(*it);
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (ws[i] == "correct" || ws[i] == "incorrect") last = i;
    if (!last) continue;
    auto v = ws[*last] == "correct" ? StepVerdict::Correct : StepVerdict::Incorrect;
    bool negated = false;
    for (std::size_t i = 0; i < *last; ++i)
      if (is_negation(ws[i])) negated = !negated;
    return negated ? opposite(v) : v;
  }
  return std::nullopt;
}

ParsedCritique parse_critique(std::string_view text) {
  ParsedCritique out;
  out.verdict = parse_verdict_sentence(text);
  auto a = find_header(text, "Analysis:");
  auto c = find_header(text, "Conclusion:");
  if (a) {
    auto start = *a + 9;
    auto end = c && *c > *a ? *c : text.size();
    out.analysis = trim(text.substr(start, end - start));
  } else {
    out.analysis = trim(c ? text.substr(0, *c) : text);
  }
  return out;
}

std::string format_critique(std::string_view analysis, StepVerdict verdict) {
  return "Analysis: " + std::string(analysis) + "\nConclusion: the step is " +
         std::string(to_string(verdict)) + ".";
}

}  // namespace spc
