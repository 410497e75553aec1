#include <sstream>

#include "rtriage/error.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

std::string_view to_string(SummaryProvenance p) {
  switch (p) {
    case SummaryProvenance::llm: return "llm";
    case SummaryProvenance::offline: return "offline";
    case SummaryProvenance::chunk_merged: return "chunk_merged";
  }
  return "llm";
}

SummaryProvenance parse_summary_provenance(std::string_view s) {
  if (s == "llm") return SummaryProvenance::llm;
  if (s == "offline") return SummaryProvenance::offline;
  if (s == "chunk_merged") return SummaryProvenance::chunk_merged;
  throw ValidationError("unknown summary provenance '" + std::string(s) + "'");
}

namespace {

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.append(sep);
    out.append(v[i]);
  }
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> w;
  std::istringstream in{std::string(s)};
  for (std::string x; in >> x;) w.push_back(x);
  return w;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Balanced [...] starting at `start`, aware of both quote styles.
std::optional<std::string_view> balanced_array(std::string_view raw, std::size_t start) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return raw.substr(start, i - start + 1);
  }
  return std::nullopt;
}

// Models wrap long values over several lines; raw control characters are not
// legal inside JSON strings.
void put_string_char(std::string& out, char c) {
  if (c == '\n' || c == '\r' || c == '\t') out.push_back(' ');
  else out.push_back(c);
}

// Rewrites single-quoted strings as JSON strings.
std::string to_strict_json(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '"') {
      out.push_back('"');
      for (++i; i < s.size() && s[i] != '"'; ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          out.append(s.substr(i, 2));
          ++i;
        } else {
          put_string_char(out, s[i]);
        }
      }
      out.push_back('"');
    } else if (c == '\'') {
      out.push_back('"');
      for (++i; i < s.size() && s[i] != '\''; ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          if (s[i + 1] == '\'') out.push_back('\'');
          else out.append(s.substr(i, 2));
          ++i;
        } else if (s[i] == '"') {
          out.append("\\\"");
        } else {
          put_string_char(out, s[i]);
        }
      }
      out.push_back('"');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

const nlohmann::json* field(const nlohmann::json& o, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (auto it = o.find(n); it != o.end()) return &*it;
  return nullptr;
}

FailureSummary groups_from_json(const nlohmann::json& arr) {
  FailureSummary s;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& g = arr[i];
    const std::string tag = "group " + std::to_string(i);
    if (!g.is_object()) {
      s.parse_issues.push_back(tag + " is not an object");
      continue;
    }
    SummaryGroup grp;
    auto text_field = [&](std::initializer_list<const char*> names, const char* what, std::string& dst) {
      const nlohmann::json* f = field(g, names);
      if (!f) s.parse_issues.push_back(tag + ": missing " + what);
      else if (!f->is_string()) s.parse_issues.push_back(tag + ": " + what + " is not a string");
      else dst = join(words(f->get<std::string>()), " ");
    };
    text_field({"statement type", "statement_type", "type"}, "statement type", grp.statement_type);
    text_field({"status"}, "status", grp.status);
    text_field({"error"}, "error", grp.error);
    if (const nlohmann::json* o = field(g, {"objects"})) {
      if (o->is_string()) {
        std::string cur;
        for (char c : o->get<std::string>() + ",") {
          if (c == ',') {
            if (auto t = trim(cur); !t.empty()) grp.objects.push_back(t);
            cur.clear();
          } else {
            cur.push_back(c);
          }
        }
      } else if (o->is_array()) {
        for (const auto& x : *o)
          if (x.is_string()) grp.objects.push_back(x.get<std::string>());
          else s.parse_issues.push_back(tag + ": non-string object " + x.dump());
      } else if (!o->is_null()) {
        s.parse_issues.push_back(tag + ": objects is neither a string nor a list");
      }
    }
    s.groups.push_back(std::move(grp));
  }
  return s;
}

}  // namespace

FailureSummary parse_summary_response(std::string_view raw) {
  for (std::size_t pos = raw.find('['); pos != std::string_view::npos; pos = raw.find('[', pos + 1)) {
    const auto candidate = balanced_array(raw, pos);
    if (!candidate) continue;
    nlohmann::json arr = nlohmann::json::parse(to_strict_json(*candidate), nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) continue;
    FailureSummary s = groups_from_json(arr);
    s.raw_response = std::string(raw);
    return s;
  }
  throw ParseError(0, "no JSON array in model response");
}

SummaryValidation validate_summary(FailureSummary& summary, int word_limit) {
  SummaryValidation v;
  v.violations = summary.parse_issues;
  if (summary.groups.empty()) v.violations.emplace_back("empty group list");
  for (std::size_t i = 0; i < summary.groups.size(); ++i) {
    auto& g = summary.groups[i];
    const std::string tag = "group " + std::to_string(i);
    if (g.status != "failed" && g.status != "skipped")
      v.violations.push_back(tag + ": unknown status '" + g.status + "'");
    auto w = words(g.error);
    if (w.size() > static_cast<std::size_t>(word_limit)) {
      w.resize(static_cast<std::size_t>(word_limit));
      g.error = join(w, " ");
      v.warnings.push_back(tag + ": error truncated to " + std::to_string(word_limit) + " words");
    }
  }
  summary.warnings.insert(summary.warnings.end(), v.warnings.begin(), v.warnings.end());
  return v;
}

std::string summary_to_text(const FailureSummary& summary) {
  std::vector<std::string> parts;
  for (const auto& g : summary.groups) {
    for (const std::string* f : {&g.statement_type, &g.status, &g.error})
      if (!f->empty()) parts.push_back(*f);
    for (const auto& o : g.objects) parts.push_back(o);
  }
  return join(parts, " ");
}

nlohmann::ordered_json summary_groups_json(const FailureSummary& s) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& g : s.groups)
    arr.push_back(nlohmann::ordered_json{{"statement type", g.statement_type},
                                         {"status", g.status},
                                         {"error", g.error},
                                         {"objects", join(g.objects, ", ")}});
  return arr;
}

std::string summary_to_json_text(const FailureSummary& s) { return summary_groups_json(s).dump(); }

void to_json(nlohmann::json& j, const FailureSummary& s) {
  j = nlohmann::json{{"groups", nlohmann::json::parse(summary_groups_json(s).dump())},
                     {"provenance", std::string(to_string(s.provenance))},
                     {"raw_response", s.raw_response}};
  if (!s.warnings.empty()) j["warnings"] = s.warnings;
}

void from_json(const nlohmann::json& j, FailureSummary& s) {
  s = groups_from_json(j.at("groups"));
  s.provenance = parse_summary_provenance(j.at("provenance").get<std::string>());
  s.raw_response = j.value("raw_response", std::string());
  if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
}

}  // namespace rtriage
