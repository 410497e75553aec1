#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "rtriage/error.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

namespace {

constexpr std::string_view kInputMarker = "Input list of JSON:\n";

}  // namespace

std::string prompt_prefix(int word_limit) {
  std::string p =
      "Given a list of JSON objects containing SAP HANA SQL statement strings, error messages, and "
      "skip reasons, generate a concise summary. Group the SQL statements based on SQL type and "
      "execution status. Summarize each group with a parseable JSON structure like:\n"
      "[{'statement type': SQL statement type,\n"
      "'status': failed/ skipped,\n"
      "'error': generic summary of all 'critical' sub-parts of\n"
      "unique error message in ";
  p += std::to_string(word_limit);
  p +=
      " words or less,\n"
      "'objects': comma-separated list of all objects}]\n"
      "\n"
      "Summarize 'identical' failures within the list similarly. Strictly adhere to the summary "
      "structure and include absolutely no additional information outside the JSON. ";
  p += kInputMarker;
  return p;
}

std::string build_prompt(const ContextSet& context, int word_limit, const AnonymizeOptions& options) {
  if (context.items.empty()) throw PreconditionError("build_prompt: empty context");
  return prompt_prefix(word_limit) + prompt_items(anonymize(context, options)).dump();
}

std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::string leading_statement_type(std::string_view stmt) {
  auto word_at = [&](std::size_t& pos) {
    while (pos < stmt.size() && !std::isalpha(static_cast<unsigned char>(stmt[pos]))) {
      if (!std::isspace(static_cast<unsigned char>(stmt[pos])) && stmt[pos] != '(') return std::string();
      ++pos;
    }
    std::string w;
    while (pos < stmt.size() && std::isalpha(static_cast<unsigned char>(stmt[pos])))
      w.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(stmt[pos++]))));
    return w;
  };
  std::size_t pos = 0;
  std::string kw = word_at(pos);
  if (kw.empty()) return "UNKNOWN";
  if (kw == "CREATE" || kw == "DROP" || kw == "ALTER") {
    std::string next = word_at(pos);
    if (next == "OR") {  // CREATE OR REPLACE VIEW
      word_at(pos);
      next = word_at(pos);
    }
    if (!next.empty()) kw += " " + next;
  }
  return kw;
}

std::vector<std::string> referenced_objects(std::string_view stmt) {
  static const std::set<std::string> anchors{"FROM", "INTO", "TABLE", "VIEW", "PROCEDURE", "CALL", "UPDATE", "JOIN"};
  static const std::set<std::string> skip{"IF", "NOT", "EXISTS", "ONLY", "SELECT", "LATERAL"};
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(cur);
    cur.clear();
  };
  for (char c : stmt) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_' || c == '.' || c == '$' || c == '"')
      cur.push_back(c);
    else
      flush();
  }
  flush();
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string up = words[i];
    for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (!anchors.count(up)) continue;
    for (std::size_t j = i + 1; j < words.size(); ++j) {
      std::string cand = words[j];
      std::erase(cand, '"');
      std::string cu = cand;
      for (char& c : cu) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (skip.count(cu)) continue;
      if (!cand.empty() && (std::isalpha(static_cast<unsigned char>(cand[0])) || cand[0] == '_') &&
          !anchors.count(cu) && seen.insert(cand).second)
        out.push_back(cand);
      break;
    }
  }
  return out;
}

FailureSummary offline_summary(const nlohmann::json& items, int word_limit) {
  struct Group {
    SummaryGroup g;
    std::vector<std::string> messages;  // in order of appearance
    std::set<std::string> object_set;
  };
  std::vector<Group> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& it : items) {
    const std::string stmt = it.value("Statement String", std::string());
    const bool skipped = it.contains("Skip Reason");
    const std::string status = skipped ? "skipped" : "failed";
    const std::string type = leading_statement_type(stmt);
    auto [pos, fresh] = index.emplace(std::make_pair(type, status), groups.size());
    if (fresh) groups.push_back(Group{SummaryGroup{type, status, "", {}}, {}, {}});
    Group& grp = groups[pos->second];
    std::string msg = skipped ? it.value("Skip Reason", std::string()) : it.value("Error Message", std::string());
    if (msg.empty()) msg = it.value("Error Message", std::string());
    if (!msg.empty()) grp.messages.push_back(msg);
    for (auto& o : referenced_objects(stmt))
      if (grp.object_set.insert(o).second) grp.g.objects.push_back(o);
  }
  FailureSummary s;
  s.provenance = SummaryProvenance::offline;
  for (auto& grp : groups) {
    // Most frequent message by normalized text; ties go to the first seen.
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // norm -> (count, first index)
    for (std::size_t i = 0; i < grp.messages.size(); ++i) {
      auto [it, fresh] = counts.emplace(normalize_statement(grp.messages[i]), std::make_pair(0, i));
      ++it->second.first;
    }
    std::size_t best = grp.messages.size(), best_count = 0;
    for (const auto& [norm, cf] : counts)
      if (cf.first > best_count || (cf.first == best_count && cf.second < best)) {
        best_count = cf.first;
        best = cf.second;
      }
    if (best < grp.messages.size()) {
      std::string out;
      std::size_t n = 0, pos = 0;
      const std::string& m = grp.messages[best];
      while (n < static_cast<std::size_t>(word_limit)) {
        const auto b = m.find_first_not_of(" \t\r\n", pos);
        if (b == std::string::npos) break;
        const auto e = m.find_first_of(" \t\r\n", b);
        if (n) out.push_back(' ');
        out.append(m, b, e == std::string::npos ? std::string::npos : e - b);
        ++n;
        pos = e == std::string::npos ? m.size() : e;
      }
      grp.g.error = out;
    }
    s.groups.push_back(std::move(grp.g));
  }
  return s;
}

std::string OfflineEndpoint::complete(const std::string& prompt) {
  const auto at = prompt.find(kInputMarker);
  if (at == std::string::npos) throw EndpointError("offline summarizer: prompt has no input list");
  int word_limit = 30;
  constexpr std::string_view kLimit = " words or less";
  if (const auto w = prompt.find(kLimit); w != std::string::npos && w < at) {
    auto b = w;
    while (b > 0 && std::isdigit(static_cast<unsigned char>(prompt[b - 1]))) --b;
    if (b < w) word_limit = std::stoi(prompt.substr(b, w - b));
  }
  const std::string rest = prompt.substr(at + kInputMarker.size());
  // The list is followed by nothing, or by a repair instruction.
  nlohmann::json items;
  const auto end = rest.rfind(']');
  if (end != std::string::npos) items = nlohmann::json::parse(rest.substr(0, end + 1), nullptr, false);
  if (items.is_discarded() || !items.is_array())
    throw EndpointError("offline summarizer: unreadable input list");
  return summary_to_json_text(offline_summary(items, word_limit));
}

FixtureEndpoint::FixtureEndpoint(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error("cannot open fixture " + jsonl.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(lineno, "fixture line is not JSON");
    if (j.contains("default")) {
      default_ = j.at("default").get<std::string>();
    } else if (j.contains("prompt")) {
      add(j.at("prompt").get<std::string>(), j.at("response").get<std::string>());
    } else {
      responses_[hash_from_hex(j.at("prompt_hash").get<std::string>())] = j.at("response").get<std::string>();
    }
  }
}

void FixtureEndpoint::add(std::string_view prompt, std::string response) {
  std::lock_guard lock(mu_);
  responses_[fnv1a64(prompt)] = std::move(response);
}

std::string FixtureEndpoint::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  if (auto it = responses_.find(fnv1a64(prompt)); it != responses_.end()) return it->second;
  if (default_) return *default_;
  throw EndpointError("fixture has no response for prompt " + hash_to_hex(fnv1a64(prompt)));
}

void to_json(nlohmann::json& j, const EndpointConfig& c) {
  j = nlohmann::json{{"kind", c.kind},
                     {"base_url", c.base_url},
                     {"path", c.path},
                     {"model", c.model},
                     {"max_context_tokens", c.max_context_tokens},
                     {"temperature", c.temperature},
                     {"timeout_seconds", c.timeout_seconds},
                     {"max_retries", c.max_retries},
                     {"retry_backoff_ms", c.retry_backoff_ms},
                     {"api_key_env", c.api_key_env},
                     {"fixture_path", c.fixture_path}};
}

void from_json(const nlohmann::json& j, EndpointConfig& c) {
  const EndpointConfig d;
  c.kind = j.value("kind", d.kind);
  c.base_url = j.value("base_url", d.base_url);
  c.path = j.value("path", d.path);
  c.model = j.value("model", d.model);
  c.max_context_tokens = j.value("max_context_tokens", d.max_context_tokens);
  c.temperature = j.value("temperature", d.temperature);
  c.timeout_seconds = j.value("timeout_seconds", d.timeout_seconds);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.retry_backoff_ms = j.value("retry_backoff_ms", d.retry_backoff_ms);
  c.api_key_env = j.value("api_key_env", d.api_key_env);
  c.fixture_path = j.value("fixture_path", d.fixture_path);
}

std::unique_ptr<CompletionEndpoint> make_endpoint(const EndpointConfig& config) {
  if (config.kind == "offline") return std::make_unique<OfflineEndpoint>();
  if (config.kind == "fixture") {
    if (config.fixture_path.empty()) throw ValidationError("fixture endpoint needs fixture_path");
    return std::make_unique<FixtureEndpoint>(config.fixture_path);
  }
  if (config.kind == "http") return std::make_unique<HttpEndpoint>(config);
  throw ValidationError("unknown endpoint kind '" + config.kind + "'");
}

}  // namespace rtriage
