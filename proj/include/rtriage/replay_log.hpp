#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rtriage/core_model.hpp"

namespace rtriage {

struct ReplayLog {
  std::string replay_id;
  std::string capture_id;
  std::vector<ReplayEvent> events;  // ascending seq_no
  std::string timestamp;
  std::string source;

  const ReplayEvent* find(std::string_view event_id) const;

  // Metadata is informational and does not take part in equality.
  bool operator==(const ReplayLog& o) const {
    return replay_id == o.replay_id && capture_id == o.capture_id && events == o.events;
  }
};

enum class LogFormat { jsonl };

/// Parses JSON-lines events. Throws ParseError (with line number) on malformed
/// lines and ValidationError naming event ids on invariant violations.
ReplayLog parse_log(std::istream& in, std::string source = {});
ReplayLog ingest(const std::filesystem::path& path, LogFormat format = LogFormat::jsonl);

void write_log(const ReplayLog& log, std::ostream& out);
void export_log(const ReplayLog& log, const std::filesystem::path& path);

/// Checks the cross-event invariants (shared replay_id, unique seq_no and
/// event_id) plus validate_event on each event.
void validate_log(const ReplayLog& log);

struct LabelRecord {
  std::string event_id;
  std::string label_id;
  LabelSource label_source = LabelSource::operator_reclassified;
  double certainty_at_labeling = 1.0;
  bool operator==(const LabelRecord&) const = default;
};

using GroundTruth = std::map<std::string, std::string>;  // event_id -> label_id

std::vector<LabelRecord> read_labels(const std::filesystem::path& path);
void write_labels(const std::vector<LabelRecord>& labels, const std::filesystem::path& path);
void write_labels(const std::vector<LabelRecord>& labels, std::ostream& out);
std::vector<LabelRecord> to_label_records(const GroundTruth& truth);
GroundTruth to_ground_truth(const std::vector<LabelRecord>& labels);

}  // namespace rtriage
