#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>

#include "rtriage/summarizer.hpp"

namespace rtriage {

namespace {

enum class Kind { email, ipv6, ipv4, host, extra };

struct Rule {
  Kind kind;
  std::regex re;
  std::string prefix;
};

const std::set<std::string>& host_suffixes() {
  static const std::set<std::string> s{"com", "net", "org", "io", "local", "corp", "internal", "lan",
                                       "intra", "example", "de", "cloud"};
  return s;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Dotted names count as hosts when they look like DNS names rather than
// schema-qualified SQL identifiers: two or more dots ending in a letter label,
// or a known domain suffix.
bool host_like(const std::string& m) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= m.size(); ++i)
    if (i == m.size() || m[i] == '.') {
      labels.push_back(m.substr(start, i - start));
      start = i + 1;
    }
  if (labels.size() < 2) return false;
  if (std::all_of(labels.begin(), labels.end(), [](const std::string& l) { return all_digits(l); })) return false;
  std::string last = labels.back();
  std::transform(last.begin(), last.end(), last.begin(), [](unsigned char c) { return std::tolower(c); });
  const bool alpha_last = last.size() >= 2 &&
                          std::all_of(last.begin(), last.end(), [](unsigned char c) { return std::isalpha(c); });
  if (!alpha_last) return false;
  return labels.size() >= 3 || host_suffixes().count(last) > 0;
}

bool ipv6_like(const std::string& m) {
  const auto colons = std::count(m.begin(), m.end(), ':');
  int groups = 0;
  bool in_group = false;
  for (char c : m) {
    if (c != ':' && !in_group) ++groups;
    in_group = c != ':';
  }
  if (groups < 2) return false;
  return m.find("::") != std::string::npos ? colons >= 2 : colons >= 5;
}

bool ipv4_like(const std::string& m) {
  std::size_t start = 0;
  for (int part = 0; part < 4; ++part) {
    const std::size_t end = part < 3 ? m.find('.', start) : m.size();
    if (end == std::string::npos) return false;
    const std::string p = m.substr(start, end - start);
    if (!all_digits(p) || p.size() > 3 || std::stoi(p) > 255) return false;
    start = end + 1;
  }
  return true;
}

std::vector<Rule> rules(const AnonymizeOptions& opt) {
  static const std::vector<Rule> base = {
      {Kind::email, std::regex(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)+)"), "EMAIL"},
      {Kind::ipv6, std::regex(R"(([0-9A-Fa-f]{0,4}:){2,7}[0-9A-Fa-f]{0,4})"), "IP"},
      {Kind::ipv4, std::regex(R"(\b\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}\b)"), "IP"},
      {Kind::host, std::regex(R"(\b[A-Za-z0-9]([A-Za-z0-9-]*[A-Za-z0-9])?(\.[A-Za-z0-9]([A-Za-z0-9-]*[A-Za-z0-9])?)+\b)"),
       "HOST"},
  };
  std::vector<Rule> all = base;
  for (const auto& p : opt.extra_patterns) all.push_back({Kind::extra, std::regex(p.regex), p.prefix});
  return all;
}

bool accept(const Rule& r, const std::string& m) {
  switch (r.kind) {
    case Kind::ipv6: return ipv6_like(m);
    case Kind::ipv4: return ipv4_like(m);
    case Kind::host: return host_like(m);
    default: return !m.empty();
  }
}

class Replacer {
 public:
  explicit Replacer(const AnonymizeOptions& opt) : rules_(rules(opt)) {}

  std::string apply(const std::string& text) {
    std::string cur = text;
    for (const auto& r : rules_) cur = apply_rule(r, cur);
    return cur;
  }

 private:
  std::string apply_rule(const Rule& r, const std::string& text) {
    std::string out;
    auto last = text.cbegin();
    for (std::sregex_iterator it(text.begin(), text.end(), r.re), end; it != end; ++it) {
      const std::string m = it->str();
      if (!accept(r, m)) continue;
      out.append(last, text.cbegin() + it->position());
      out.append(placeholder(r.prefix, m));
      last = text.cbegin() + it->position() + it->length();
    }
    out.append(last, text.cend());
    return out;
  }

  std::string placeholder(const std::string& prefix, const std::string& original) {
    auto& table = seen_[prefix];
    auto it = table.find(original);
    if (it != table.end()) return it->second;
    std::string p = prefix + "_" + std::to_string(table.size() + 1);
    table.emplace(original, p);
    return p;
  }

  std::vector<Rule> rules_;
  std::map<std::string, std::map<std::string, std::string>> seen_;
};

}  // namespace

ContextSet anonymize(const ContextSet& context, const AnonymizeOptions& options) {
  Replacer rep(options);
  ContextSet out = context;
  for (auto& it : out.items) {
    it.statement_string = rep.apply(it.statement_string);
    if (it.error_message) it.error_message = rep.apply(*it.error_message);
    if (it.skip_reason) it.skip_reason = rep.apply(*it.skip_reason);
  }
  return out;
}

bool contains_sensitive(std::string_view text, const AnonymizeOptions& options) {
  const std::string s(text);
  for (const auto& r : rules(options))
    for (std::sregex_iterator it(s.begin(), s.end(), r.re), end; it != end; ++it)
      if (accept(r, it->str())) return true;
  return false;
}

}  // namespace rtriage
