#include "rtriage/replay_log.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "rtriage/error.hpp"

namespace rtriage {

const ReplayEvent* ReplayLog::find(std::string_view event_id) const {
  for (const auto& e : events)
    if (e.event_id == event_id) return &e;
  return nullptr;
}

void validate_log(const ReplayLog& log) {
  std::vector<std::string> problems;
  std::unordered_map<std::uint64_t, const ReplayEvent*> by_seq;
  std::unordered_map<std::string, const ReplayEvent*> by_id;
  for (const auto& e : log.events) {
    auto r = validate_event(e);
    for (const auto& v : r.violations) problems.push_back(e.event_id + ": " + v);
    if (e.replay_id != log.replay_id)
      problems.push_back(e.event_id + ": replay_id '" + e.replay_id + "' differs from '" +
                         log.replay_id + "'");
    auto [it, fresh] = by_seq.emplace(e.seq_no, &e);
    if (!fresh)
      problems.push_back("duplicate seq_no " + std::to_string(e.seq_no) + " in replay '" +
                         e.replay_id + "': " + it->second->event_id + ", " + e.event_id);
    auto [jt, fresh_id] = by_id.emplace(e.event_id, &e);
    if (!fresh_id) problems.push_back("duplicate event_id " + e.event_id);
  }
  for (std::size_t i = 1; i < log.events.size(); ++i)
    if (log.events[i - 1].seq_no > log.events[i].seq_no) {
      problems.emplace_back("events not sorted by seq_no");
      break;
    }
  if (problems.empty()) return;
  std::string msg = "invalid replay log:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ValidationError(msg);
}

ReplayLog parse_log(std::istream& in, std::string source) {
  ReplayLog log;
  log.source = std::move(source);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.events.push_back(nlohmann::json::parse(line).get<ReplayEvent>());
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(lineno, ex.what());
    } catch (const ValidationError& ex) {
      throw ParseError(lineno, ex.what());
    }
  }
  std::stable_sort(log.events.begin(), log.events.end(),
                   [](const ReplayEvent& a, const ReplayEvent& b) { return a.seq_no < b.seq_no; });
  if (!log.events.empty()) {
    log.replay_id = log.events.front().replay_id;
    log.capture_id = log.events.front().capture_id;
  }
  validate_log(log);
  return log;
}

ReplayLog ingest(const std::filesystem::path& path, LogFormat) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_log(in, path.string());
}

void write_log(const ReplayLog& log, std::ostream& out) {
  for (const auto& e : log.events) out << nlohmann::json(e).dump() << '\n';
}

void export_log(const ReplayLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_log(log, out);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<LabelRecord> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<LabelRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      LabelRecord r;
      r.event_id = j.at("event_id").get<std::string>();
      r.label_id = j.at("label_id").get<std::string>();
      r.label_source =
          parse_label_source(j.value("label_source", std::string("operator_reclassified")));
      r.certainty_at_labeling = j.value("certainty_at_labeling", 1.0);
      out.push_back(std::move(r));
    } catch (const std::exception& ex) {
      throw ParseError(lineno, ex.what());
    }
  }
  return out;
}

void write_labels(const std::vector<LabelRecord>& labels, std::ostream& out) {
  for (const auto& r : labels) {
    nlohmann::json j{{"event_id", r.event_id},
                     {"label_id", r.label_id},
                     {"label_source", std::string(to_string(r.label_source))},
                     {"certainty_at_labeling", r.certainty_at_labeling}};
    out << j.dump() << '\n';
  }
}

void write_labels(const std::vector<LabelRecord>& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_labels(labels, out);
}

std::vector<LabelRecord> to_label_records(const GroundTruth& truth) {
  std::vector<LabelRecord> out;
  out.reserve(truth.size());
  for (const auto& [id, label] : truth) out.push_back({id, label, LabelSource::operator_reclassified, 1.0});
  return out;
}

GroundTruth to_ground_truth(const std::vector<LabelRecord>& labels) {
  GroundTruth g;
  for (const auto& r : labels) g[r.event_id] = r.label_id;
  return g;
}

}  // namespace rtriage
