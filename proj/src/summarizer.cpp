#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rtriage/error.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

namespace {

constexpr std::string_view kRepair = "\n\nReturn only the JSON array.";

std::string first_words(std::string_view s, int limit) {
  std::istringstream in{std::string(s)};
  std::string out, w;
  for (int n = 0; n < limit && in >> w; ++n) {
    if (n) out.push_back(' ');
    out += w;
  }
  return out;
}

std::string merge_prompt(const std::vector<SummaryGroup>& groups, int word_limit) {
  std::string p =
      "Merge the following partial summaries of one failure context into a single summary. "
      "Combine groups with the same 'statement type' and 'status', keep every object, and "
      "summarize the errors of each combined group in ";
  p += std::to_string(word_limit);
  p +=
      " words or less. Strictly adhere to the summary structure and include absolutely no "
      "additional information outside the JSON. Partial summaries:\n";
  FailureSummary tmp;
  tmp.groups = groups;
  return p + summary_to_json_text(tmp);
}

class Permit {
 public:
  explicit Permit(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~Permit() { s_.release(); }
  Permit(const Permit&) = delete;
  Permit& operator=(const Permit&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

std::uint64_t context_hash(const ContextSet& context, const AnonymizeOptions& options) {
  return fnv1a64(prompt_items(anonymize(context, options)).dump());
}

Summarizer::Summarizer(CompletionEndpoint& endpoint, SummarizerOptions options)
    : endpoint_(endpoint), options_(std::move(options)), in_flight_(std::max(1, options_.max_in_flight)) {
  if (options_.word_limit < 1) throw ValidationError("word_limit must be positive");
  if (options_.token_budget < 1) throw ValidationError("token_budget must be positive");
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::uint64_t Summarizer::cache_key(const ContextSet& context) const {
  std::string key = prompt_items(anonymize(context, options_.anonymize)).dump();
  key += '\x1f';
  key += endpoint_.model();
  key += '\x1f';
  key += std::to_string(options_.word_limit);
  return fnv1a64(key);
}

std::optional<FailureSummary> Summarizer::cache_get(std::uint64_t key) const {
  {
    std::lock_guard lock(cache_mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  std::ifstream in(*options_.cache_dir / (hash_to_hex(key) + ".json"));
  if (!in) return std::nullopt;
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("summary")) return std::nullopt;
  FailureSummary s = j.at("summary").get<FailureSummary>();
  std::lock_guard lock(cache_mu_);
  cache_.emplace(key, s);
  return s;
}

void Summarizer::cache_put(std::uint64_t key, const FailureSummary& s) {
  std::lock_guard lock(cache_mu_);
  cache_[key] = s;
  if (!options_.cache_dir) return;
  const auto path = *options_.cache_dir / (hash_to_hex(key) + ".json");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << nlohmann::json{{"raw_response", s.raw_response}, {"summary", s}}.dump();
  }
  std::filesystem::rename(tmp, path);
}

bool Summarizer::cached(const ContextSet& context) const {
  return !context.items.empty() && cache_get(cache_key(context)).has_value();
}

std::string Summarizer::call(const std::string& prompt) {
  Permit permit(in_flight_);
  ++calls_;
  return endpoint_.complete(prompt);
}

FailureSummary Summarizer::summarize_prompt(const std::string& prompt) {
  FailureSummary s;
  try {
    s = parse_summary_response(call(prompt));
  } catch (const ParseError&) {
    s = parse_summary_response(call(prompt + std::string(kRepair)));
  }
  s.provenance = endpoint_.offline() ? SummaryProvenance::offline : SummaryProvenance::llm;
  const auto v = validate_summary(s, options_.word_limit);
  if (!v.ok()) {
    std::string msg = "invalid summary:";
    for (const auto& x : v.violations) msg += " " + x + ";";
    throw ValidationError(msg);
  }
  return s;
}

FailureSummary Summarizer::summarize(const ContextSet& context) {
  if (context.items.empty()) throw PreconditionError("summarize: empty context");
  const std::uint64_t key = cache_key(context);
  if (auto hit = cache_get(key)) {
    ++hits_;
    return *hit;
  }
  const std::string prompt = build_prompt(context, options_.word_limit, options_.anonymize);
  FailureSummary s = estimate_tokens(prompt) <= options_.token_budget ? summarize_prompt(prompt)
                                                                       : summarize_chunked(context);
  cache_put(key, s);
  return s;
}

std::vector<ContextSet> Summarizer::split_chunks(const ContextSet& context) const {
  const ContextSet anon = anonymize(context, options_.anonymize);
  const std::string prefix = prompt_prefix(options_.word_limit);
  const auto budget_bytes = static_cast<std::size_t>(options_.token_budget) * 4;
  // prompt bytes = prefix + "[" + items joined by "," + "]"
  auto item_bytes = [](const ContextItem& it) {
    ContextSet one;
    one.items.push_back(it);
    return prompt_items(one).dump().size() - 2;
  };
  if (prefix.size() + 2 + 2 > budget_bytes)
    throw PreconditionError("token budget is smaller than the prompt instructions");

  std::vector<ContextSet> chunks;
  ContextSet cur{context.target_event_id, {}, context.truncated};
  std::size_t cur_bytes = prefix.size() + 2;
  for (ContextItem it : anon.items) {
    std::size_t b = item_bytes(it);
    if (!cur.items.empty() && cur_bytes + 1 + b > budget_bytes) {
      chunks.push_back(std::move(cur));
      cur = ContextSet{context.target_event_id, {}, context.truncated};
      cur_bytes = prefix.size() + 2;
    }
    // A single item larger than the budget is cut down field by field.
    while (cur_bytes + (cur.items.empty() ? 0 : 1) + b > budget_bytes) {
      std::string* longest = &it.statement_string;
      if (it.error_message && it.error_message->size() > longest->size()) longest = &*it.error_message;
      if (it.skip_reason && it.skip_reason->size() > longest->size()) longest = &*it.skip_reason;
      if (longest->empty()) throw PreconditionError("token budget cannot hold a single context item");
      longest->resize(longest->size() / 2);
      cur.truncated = true;
      b = item_bytes(it);
    }
    cur_bytes += (cur.items.empty() ? 0 : 1) + b;
    cur.items.push_back(std::move(it));
  }
  if (!cur.items.empty()) chunks.push_back(std::move(cur));
  return chunks;
}

FailureSummary Summarizer::summarize_chunked(const ContextSet& context) {
  if (context.items.empty()) throw PreconditionError("summarize: empty context");
  const std::string whole = build_prompt(context, options_.word_limit, options_.anonymize);
  if (estimate_tokens(whole) <= options_.token_budget) return summarize(context);
  std::vector<FailureSummary> parts;
  for (const auto& chunk : split_chunks(context)) parts.push_back(summarize(chunk));
  FailureSummary merged = merge(std::move(parts));
  cache_put(cache_key(context), merged);
  return merged;
}

FailureSummary Summarizer::merge(std::vector<FailureSummary> parts) {
  struct Acc {
    SummaryGroup g;
    std::vector<std::string> errors;
    std::set<std::string> error_keys, object_set;
  };
  std::vector<Acc> acc;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<SummaryGroup> all_groups;
  std::string raw;
  for (auto& p : parts) {
    if (!raw.empty()) raw += "\n";
    raw += p.raw_response;
    for (auto& g : p.groups) {
      all_groups.push_back(g);
      auto [pos, fresh] = index.emplace(std::make_pair(g.statement_type, g.status), acc.size());
      if (fresh) acc.push_back(Acc{SummaryGroup{g.statement_type, g.status, "", {}}, {}, {}, {}});
      Acc& a = acc[pos->second];
      if (!g.error.empty() && a.error_keys.insert(normalize_statement(g.error)).second) a.errors.push_back(g.error);
      for (auto& o : g.objects)
        if (a.object_set.insert(o).second) a.g.objects.push_back(o);
    }
  }
  bool needs_model = false;
  for (auto& a : acc) {
    std::string joined;
    for (const auto& e : a.errors) joined += (joined.empty() ? "" : "; ") + e;
    a.g.error = first_words(joined, options_.word_limit);
    needs_model = needs_model || a.errors.size() > 1;
  }

  FailureSummary out;
  out.provenance = SummaryProvenance::chunk_merged;
  out.raw_response = raw;
  for (auto& a : acc) out.groups.push_back(a.g);

  if (needs_model && !endpoint_.offline()) {
    const std::string prompt = merge_prompt(all_groups, options_.word_limit);
    if (estimate_tokens(prompt) <= options_.token_budget) {
      try {
        FailureSummary m = parse_summary_response(call(prompt));
        validate_summary(m, options_.word_limit);
        // Objects stay the exact union; the model only rewrites the errors.
        for (const auto& g : m.groups)
          if (auto it = index.find({g.statement_type, g.status}); it != index.end() && !g.error.empty())
            out.groups[it->second].error = g.error;
        out.raw_response = m.raw_response;
      } catch (const ParseError&) {
        // keep the lexical merge
      }
    }
  }
  const auto v = validate_summary(out, options_.word_limit);
  if (!v.ok()) {
    std::string msg = "invalid merged summary:";
    for (const auto& x : v.violations) msg += " " + x + ";";
    throw ValidationError(msg);
  }
  return out;
}

}  // namespace rtriage
