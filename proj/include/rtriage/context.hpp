#pragma once

// Session-scoped failure context of a failed event: prior failed or skipped
// statements of the same session, one per statement hash.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/core_model.hpp"
#include "rtriage/replay_log.hpp"

namespace rtriage {

struct ContextItem {
  std::string statement_string;
  std::optional<std::int64_t> error_code;
  std::optional<std::string> error_message;
  std::optional<std::string> skip_reason;
  EventStatus status = EventStatus::failed;
  std::uint64_t statement_hash = 0;
  std::uint64_t seq_no = 0;

  bool operator==(const ContextItem&) const = default;
};

struct ContextSet {
  std::string target_event_id;
  std::vector<ContextItem> items;  // ascending seq_no of first occurrence
  bool truncated = false;

  bool operator==(const ContextSet&) const = default;
};

/// Throws NotFoundError for an unknown target and PreconditionError when the
/// target did not fail. A max_items cap keeps the newest items.
ContextSet collect(const ReplayLog& log, std::string_view target_event_id,
                   std::optional<std::size_t> max_items = std::nullopt);

struct ContextStats {
  std::size_t failures = 0;
  std::size_t min = 0;
  double mean = 0;
  std::size_t max = 0;
};

ContextStats context_stats(const ReplayLog& log);

/// Collects the context of every failed event in one pass over the log.
std::vector<ContextSet> collect_all(const ReplayLog& log);

/// The prompt input list: "Statement String", "Error Code", "Error Message",
/// "Skip Reason" per item, absent fields omitted.
nlohmann::ordered_json prompt_items(const ContextSet& ctx);

void to_json(nlohmann::json& j, const ContextSet& c);
void from_json(const nlohmann::json& j, ContextSet& c);

}  // namespace rtriage
