#pragma once

// Failure-context summarization: anonymize the context, render the grouping
// prompt, keep it inside the model's token budget, and parse the JSON summary
// that comes back.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/context.hpp"

namespace rtriage {

struct SummaryGroup {
  std::string statement_type;
  std::string status;  // "failed" or "skipped" once validated
  std::string error;
  std::vector<std::string> objects;
  bool operator==(const SummaryGroup&) const = default;
};

enum class SummaryProvenance { llm, offline, chunk_merged };
std::string_view to_string(SummaryProvenance p);
SummaryProvenance parse_summary_provenance(std::string_view s);

struct FailureSummary {
  std::vector<SummaryGroup> groups;
  SummaryProvenance provenance = SummaryProvenance::llm;
  std::string raw_response;
  std::vector<std::string> parse_issues;  // structural problems seen while parsing
  std::vector<std::string> warnings;      // e.g. truncated error fields
};

/// Response-shaped array: [{"statement type", "status", "error", "objects"}],
/// objects as a comma-separated string.
nlohmann::ordered_json summary_groups_json(const FailureSummary& s);
std::string summary_to_json_text(const FailureSummary& s);

/// Extracts the first well-formed JSON array from a model response. Accepts the
/// single-quoted style the prompt itself uses. Throws ParseError when no array
/// can be found.
FailureSummary parse_summary_response(std::string_view raw);

struct SummaryValidation {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const { return violations.empty(); }
};

/// Truncates over-long errors to word_limit words (a warning, not a violation)
/// and reports unknown statuses, empty group lists and malformed objects.
SummaryValidation validate_summary(FailureSummary& summary, int word_limit);

/// "type status error objects..." per group, joined by spaces.
std::string summary_to_text(const FailureSummary& summary);

struct AnonymizePattern {
  std::string regex;
  std::string prefix;  // placeholder becomes PREFIX_n
};

struct AnonymizeOptions {
  std::vector<AnonymizePattern> extra_patterns;
};

/// Replaces e-mail addresses, IPv4/IPv6 literals, host names and any extra
/// patterns by stable placeholders (EMAIL_n, IP_n, HOST_n, ...). The same
/// original value maps to the same placeholder within one context set.
ContextSet anonymize(const ContextSet& context, const AnonymizeOptions& options = {});

/// True if the text still contains something the default patterns would replace.
bool contains_sensitive(std::string_view text, const AnonymizeOptions& options = {});

/// Instruction block shared by all prompts, with the word limit interpolated.
std::string prompt_prefix(int word_limit);
/// Prefix followed by the compact JSON list of the anonymized items.
/// Throws PreconditionError on an empty context.
std::string build_prompt(const ContextSet& context, int word_limit,
                         const AnonymizeOptions& options = {});

/// ceil(bytes / 4).
std::int64_t estimate_tokens(std::string_view text);

struct EndpointConfig {
  std::string kind = "offline";  // offline | http | fixture
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4-turbo";
  std::int64_t max_context_tokens = 128000;
  double temperature = 0.0;
  int timeout_seconds = 120;
  int max_retries = 3;
  int retry_backoff_ms = 500;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string fixture_path;
};

void to_json(nlohmann::json& j, const EndpointConfig& c);
void from_json(const nlohmann::json& j, EndpointConfig& c);

class CompletionEndpoint {
 public:
  virtual ~CompletionEndpoint() = default;
  /// Throws EndpointError when no response could be obtained.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model() const = 0;
  /// Offline endpoints merge chunk summaries lexically instead of prompting.
  virtual bool offline() const { return false; }
};

/// Deterministic stand-in for the model: reads the item list out of the
/// prompt, groups by (leading keyword, status), keeps the most frequent error
/// cut to the prompt's word limit and lists referenced objects.
class OfflineEndpoint final : public CompletionEndpoint {
 public:
  std::string complete(const std::string& prompt) override;
  std::string model() const override { return "offline-summarizer"; }
  bool offline() const override { return true; }
};

/// Offline grouping rule applied to a prompt item list.
FailureSummary offline_summary(const nlohmann::json& items, int word_limit);
std::string leading_statement_type(std::string_view statement);
std::vector<std::string> referenced_objects(std::string_view statement);

/// Serves recorded responses keyed by prompt hash; prompts without a recording
/// fail with EndpointError.
class FixtureEndpoint final : public CompletionEndpoint {
 public:
  FixtureEndpoint() = default;
  explicit FixtureEndpoint(const std::filesystem::path& jsonl);
  void add(std::string_view prompt, std::string response);
  void set_default(std::string response) { default_ = std::move(response); }
  std::string complete(const std::string& prompt) override;
  std::string model() const override { return "fixture"; }

 private:
  std::unordered_map<std::uint64_t, std::string> responses_;
  std::optional<std::string> default_;
  std::mutex mu_;
};

/// Chat-completion client: one user message carrying the prompt. Transport
/// errors, 429 and 5xx are retried per the config.
class HttpEndpoint final : public CompletionEndpoint {
 public:
  explicit HttpEndpoint(EndpointConfig config);
  std::string complete(const std::string& prompt) override;
  std::string model() const override { return config_.model; }

 private:
  EndpointConfig config_;
  std::string api_key_;
};

std::unique_ptr<CompletionEndpoint> make_endpoint(const EndpointConfig& config);

struct SummarizerOptions {
  int word_limit = 30;
  std::int64_t token_budget = 128000;
  AnonymizeOptions anonymize;
  std::optional<std::filesystem::path> cache_dir;
  int max_in_flight = 4;
};

/// Stable 64-bit key of the anonymized item list.
std::uint64_t context_hash(const ContextSet& context, const AnonymizeOptions& options = {});

class Summarizer {
 public:
  Summarizer(CompletionEndpoint& endpoint, SummarizerOptions options);

  /// Throws PreconditionError on an empty context, EndpointError when the
  /// endpoint stays unreachable, ParseError when the response cannot be parsed
  /// even after one repair prompt, ValidationError on structural violations.
  FailureSummary summarize(const ContextSet& context);
  FailureSummary summarize_chunked(const ContextSet& context);

  /// Prefix-maximal chunks whose prompts each fit the token budget.
  std::vector<ContextSet> split_chunks(const ContextSet& context) const;

  bool cached(const ContextSet& context) const;
  std::size_t endpoint_calls() const { return calls_.load(); }
  std::size_t cache_hits() const { return hits_.load(); }
  const SummarizerOptions& options() const { return options_; }

 private:
  std::uint64_t cache_key(const ContextSet& context) const;
  std::optional<FailureSummary> cache_get(std::uint64_t key) const;
  void cache_put(std::uint64_t key, const FailureSummary& s);
  std::string call(const std::string& prompt);
  FailureSummary summarize_prompt(const std::string& prompt);
  FailureSummary merge(std::vector<FailureSummary> parts);

  CompletionEndpoint& endpoint_;
  SummarizerOptions options_;
  mutable std::mutex cache_mu_;
  mutable std::unordered_map<std::uint64_t, FailureSummary> cache_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> hits_{0};
};

void to_json(nlohmann::json& j, const FailureSummary& s);
void from_json(const nlohmann::json& j, FailureSummary& s);

}  // namespace rtriage
