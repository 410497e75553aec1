#pragma once

// Operator actions, label harvesting and versioned training datasets, kept in
// an append-only JSON-lines journal.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/classifier.hpp"
#include "rtriage/core_model.hpp"
#include "rtriage/pipeline.hpp"

namespace rtriage {

enum class ActionKind { reclassify, confirm, rate_replay };
std::string_view to_string(ActionKind k);
ActionKind parse_action_kind(std::string_view s);

struct OperatorAction {
  ActionKind kind = ActionKind::confirm;
  std::string event_id;  // reclassify / confirm
  std::string label_id;  // reclassify
  std::string replay_id; // rate_replay
  int rating = 0;        // rate_replay, 1..4
  std::string operator_id;
  std::string timestamp;  // ISO 8601, "YYYY-MM-DDThh:mm:ssZ"
  bool operator==(const OperatorAction&) const = default;
};

/// Throws ValidationError on a missing target, an empty label or a rating
/// outside 1..4.
void validate_action(const OperatorAction& a);

/// Latest reclassify/confirm per event, ordered by (timestamp, journal order).
std::map<std::string, OperatorAction> latest_label_actions(const std::vector<OperatorAction>& actions);

struct HarvestInput {
  ReplayEvent event;
  Prediction prediction;
  std::optional<std::string> summary_text;
};

/// Keeps operator-handled events and unflagged predictions with certainty >=
/// theta, labels them (operator label wins), dedups, then caps every
/// (replay, label) at `cap` items by earliest seq_no. Throws NotFoundError
/// when a label action names an event that has no prediction.
std::vector<LabeledEvent> harvest(const std::vector<HarvestInput>& inputs, const std::vector<OperatorAction>& actions,
                                  double theta, int cap);

/// (statement_hash, error_code, label, summary hash).
std::string dedup_key(const LabeledEvent& e);
/// First occurrence per dedup key, order preserved.
std::vector<LabeledEvent> dedup(const std::vector<LabeledEvent>& items);

struct ProvenanceEntry {
  std::string event_id;
  std::string source;  // e.g. "seed", "harvest:R0001"
  int version_added = 0;
  bool operator==(const ProvenanceEntry&) const = default;
};

struct TrainingDataset {
  int version = 0;
  std::vector<LabeledEvent> items;
  std::vector<ProvenanceEntry> provenance;  // parallel to items
  bool operator==(const TrainingDataset&) const = default;
};

/// New version: base items relabeled by the latest reclassify actions, new
/// items merged in (an event already present is replaced), then dedup.
TrainingDataset assemble(const TrainingDataset& base, const std::vector<LabeledEvent>& new_items,
                         const std::vector<OperatorAction>& actions, const std::string& source);

struct WeeklyRating {
  std::string week;  // ISO week, "2026-W42"
  double average = 0;
  std::size_t replays = 0;
  bool operator==(const WeeklyRating&) const = default;
};

/// ISO week label of an ISO-8601 timestamp. Throws ValidationError on a
/// malformed date.
std::string iso_week(std::string_view timestamp);

/// Mean rating per ISO week, one value per replay: its most severe rating
/// that week.
std::vector<WeeklyRating> weekly_rating_report(const std::vector<OperatorAction>& actions);

/// Append-only JSON-lines file; every line is one object with an "op" field.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  void append(const nlohmann::json& entry);
  std::vector<nlohmann::json> read_all() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
};

/// Dataset versions and operator actions. With a journal, every mutation is
/// appended before it is applied, and construction replays the journal.
class TrainingStore {
 public:
  TrainingStore() = default;
  explicit TrainingStore(std::shared_ptr<Journal> journal);

  void seed(const std::vector<LabeledEvent>& items, const std::string& source = "seed");
  void record_action(const OperatorAction& action);
  TrainingDataset assemble_new(const std::vector<LabeledEvent>& new_items, const std::string& source);

  TrainingDataset current() const;
  std::vector<TrainingDataset> versions() const;
  std::vector<OperatorAction> actions() const;

  /// Applies one journal entry; entries with other ops are ignored.
  void apply(const nlohmann::json& entry);
  /// Canonical serialization of the whole state.
  std::string state_json() const;

 private:
  void apply_locked(const nlohmann::json& entry);
  void write(const nlohmann::json& entry);

  std::shared_ptr<Journal> journal_;
  mutable std::mutex mu_;
  std::vector<TrainingDataset> versions_;
  std::vector<OperatorAction> actions_;
};

void to_json(nlohmann::json& j, const OperatorAction& a);
void from_json(const nlohmann::json& j, OperatorAction& a);
void to_json(nlohmann::json& j, const TrainingDataset& d);
void from_json(const nlohmann::json& j, TrainingDataset& d);
void to_json(nlohmann::json& j, const WeeklyRating& w);

}  // namespace rtriage
