#include "rtriage/context.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "rtriage/error.hpp"

namespace rtriage {

namespace {

ContextItem item_of(const ReplayEvent& e) {
  return ContextItem{e.statement_string, e.error_code, e.error_message, e.skip_reason,
                     e.status,           e.statement_hash, e.seq_no};
}

bool is_context_status(EventStatus s) { return s == EventStatus::failed || s == EventStatus::skipped; }

void cap(ContextSet& c, std::optional<std::size_t> max_items) {
  if (max_items && c.items.size() > *max_items) {
    c.items.erase(c.items.begin(), c.items.end() - static_cast<std::ptrdiff_t>(*max_items));
    c.truncated = true;
  }
}

}  // namespace

ContextSet collect(const ReplayLog& log, std::string_view target_event_id,
                   std::optional<std::size_t> max_items) {
  if (max_items && *max_items == 0) throw PreconditionError("collect: max_items must be positive");
  const ReplayEvent* target = log.find(target_event_id);
  if (!target) throw NotFoundError("unknown event '" + std::string(target_event_id) + "'");
  if (target->status != EventStatus::failed)
    throw PreconditionError("event '" + target->event_id + "' did not fail");

  ContextSet c;
  c.target_event_id = target->event_id;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : log.events) {
    if (e.seq_no >= target->seq_no) break;
    if (e.session_id != target->session_id || !is_context_status(e.status)) continue;
    if (seen.insert(e.statement_hash).second) c.items.push_back(item_of(e));
  }
  cap(c, max_items);
  return c;
}

std::vector<ContextSet> collect_all(const ReplayLog& log) {
  struct SessionState {
    std::vector<ContextItem> items;
    std::unordered_set<std::uint64_t> seen;
  };
  std::unordered_map<std::string, SessionState> sessions;
  std::vector<ContextSet> out;
  for (const auto& e : log.events) {
    auto& s = sessions[e.session_id];
    if (e.status == EventStatus::failed) out.push_back(ContextSet{e.event_id, s.items, false});
    if (is_context_status(e.status) && s.seen.insert(e.statement_hash).second) s.items.push_back(item_of(e));
  }
  return out;
}

ContextStats context_stats(const ReplayLog& log) {
  ContextStats st;
  std::size_t total = 0;
  st.min = std::numeric_limits<std::size_t>::max();
  for (const auto& c : collect_all(log)) {
    const std::size_t n = c.items.size();
    ++st.failures;
    total += n;
    st.min = std::min(st.min, n);
    st.max = std::max(st.max, n);
  }
  if (st.failures == 0) {
    st.min = 0;
    return st;
  }
  st.mean = static_cast<double>(total) / static_cast<double>(st.failures);
  return st;
}

nlohmann::ordered_json prompt_items(const ContextSet& ctx) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& it : ctx.items) {
    nlohmann::ordered_json o;
    o["Statement String"] = it.statement_string;
    if (it.error_code) o["Error Code"] = *it.error_code;
    if (it.error_message) o["Error Message"] = *it.error_message;
    if (it.skip_reason) o["Skip Reason"] = *it.skip_reason;
    arr.push_back(std::move(o));
  }
  return arr;
}

void to_json(nlohmann::json& j, const ContextSet& c) {
  j = nlohmann::json{{"target_event_id", c.target_event_id}, {"truncated", c.truncated}};
  auto& items = j["items"] = nlohmann::json::array();
  for (const auto& it : c.items) {
    nlohmann::json o{{"statement_string", it.statement_string},
                     {"status", std::string(to_string(it.status))},
                     {"statement_hash", hash_to_hex(it.statement_hash)},
                     {"seq_no", it.seq_no}};
    if (it.error_code) o["error_code"] = *it.error_code;
    if (it.error_message) o["error_message"] = *it.error_message;
    if (it.skip_reason) o["skip_reason"] = *it.skip_reason;
    items.push_back(std::move(o));
  }
}

void from_json(const nlohmann::json& j, ContextSet& c) {
  c = ContextSet{};
  c.target_event_id = j.at("target_event_id").get<std::string>();
  c.truncated = j.value("truncated", false);
  for (const auto& o : j.at("items")) {
    ContextItem it;
    it.statement_string = o.at("statement_string").get<std::string>();
    it.status = parse_status(o.at("status").get<std::string>());
    it.statement_hash = o.contains("statement_hash") ? hash_from_hex(o.at("statement_hash").get<std::string>())
                                                     : hash_statement(it.statement_string);
    it.seq_no = o.value("seq_no", std::uint64_t{0});
    if (o.contains("error_code")) it.error_code = o.at("error_code").get<std::int64_t>();
    if (o.contains("error_message")) it.error_message = o.at("error_message").get<std::string>();
    if (o.contains("skip_reason")) it.skip_reason = o.at("skip_reason").get<std::string>();
    c.items.push_back(std::move(it));
  }
}

}  // namespace rtriage
