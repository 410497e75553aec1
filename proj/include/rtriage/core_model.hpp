#pragma once

// Domain types shared by every stage of the triage pipeline.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rtriage {

enum class EventStatus { failed, skipped, succeeded };

std::string_view to_string(EventStatus s);
EventStatus parse_status(std::string_view s);

/// One executed or skipped SQL statement of a replay.
struct ReplayEvent {
  std::string event_id;
  std::string replay_id;
  std::string capture_id;
  std::string session_id;
  std::uint64_t seq_no = 0;
  std::uint64_t statement_hash = 0;
  std::string statement_string;
  std::string sql_type;
  std::string sql_sub_type;
  std::string request_name;
  std::optional<std::int64_t> error_code;
  std::optional<std::string> error_message;
  std::optional<std::string> skip_reason;
  EventStatus status = EventStatus::succeeded;

  bool operator==(const ReplayEvent&) const = default;
};

/// Lowercases, collapses whitespace runs and strips trailing semicolons.
std::string normalize_statement(std::string_view statement);

/// FNV-1a 64 over the normalized statement. Seedless, so hashes written by one
/// process can be compared against hashes computed by another.
std::uint64_t hash_statement(std::string_view statement);

/// Plain FNV-1a 64 over the raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

std::string hash_to_hex(std::uint64_t h);
std::uint64_t hash_from_hex(std::string_view hex);

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_event(const ReplayEvent& event);

/// Builds a well-formed event, filling statement_hash from the statement text.
ReplayEvent make_event(std::string event_id, std::string replay_id, std::string session_id,
                       std::uint64_t seq_no, std::string statement, EventStatus status);

/// Categorical attributes that get one-hot encoded.
enum class CategoricalAttribute { error_code, request_name, sql_type, sql_sub_type };
inline constexpr std::size_t kCategoricalAttributeCount = 4;

std::string categorical_value(const ReplayEvent& e, CategoricalAttribute a);

struct CategoricalSchema {
  // Indexed by CategoricalAttribute.
  std::vector<std::vector<std::string>> vocabularies =
      std::vector<std::vector<std::string>>(kCategoricalAttributeCount);
  bool oov_slot = true;

  /// Collects every observed value, in first-seen order.
  static CategoricalSchema fit(const std::vector<const ReplayEvent*>& events, bool oov_slot = true);

  std::size_t width() const;
  std::size_t attribute_offset(CategoricalAttribute a) const;
  /// Absolute slot index for the attribute value; OOV slot if unseen.
  std::size_t slot(CategoricalAttribute a, std::string_view value) const;

  bool operator==(const CategoricalSchema&) const = default;
};

struct RootCauseLabel {
  std::string label_id;
  std::string display_name;
  bool operator==(const RootCauseLabel&) const = default;
};

enum class LabelSource { predicted_certain, operator_reclassified };
std::string_view to_string(LabelSource s);
LabelSource parse_label_source(std::string_view s);

struct LabeledEvent {
  ReplayEvent event;
  RootCauseLabel label;
  LabelSource label_source = LabelSource::operator_reclassified;
  double certainty_at_labeling = 1.0;
  std::optional<std::string> summary_text;
  bool operator==(const LabeledEvent&) const = default;
};

struct Hyperparameters {
  int k_neighbors = 5;
  double w_categorical = 0.5;
  double w_textual = 1.0;
  double certainty_threshold = 0.9;
  double problem_group_threshold = 0.95;
  int error_word_limit = 30;
  std::int64_t token_budget = 128000;
  int per_class_replay_cap = 100;
  int cv_folds = 5;
  int embed_dim = 128;
  int ngram_min = 3;
  int ngram_max = 6;
  std::uint64_t hash_seed = 0x5eed;
  int chi2_top_terms = 20;
  int tfidf_top_terms = 12;

  bool operator==(const Hyperparameters&) const = default;
};

/// Throws ValidationError listing every violated constraint.
void validate(const Hyperparameters& hp);

void to_json(nlohmann::json& j, const ReplayEvent& e);
void from_json(const nlohmann::json& j, ReplayEvent& e);
void to_json(nlohmann::json& j, const CategoricalSchema& s);
void from_json(const nlohmann::json& j, CategoricalSchema& s);
void to_json(nlohmann::json& j, const Hyperparameters& hp);
void from_json(const nlohmann::json& j, Hyperparameters& hp);
void to_json(nlohmann::json& j, const LabeledEvent& e);
void from_json(const nlohmann::json& j, LabeledEvent& e);

}  // namespace rtriage
