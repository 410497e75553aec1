#pragma once

// Instance-based root-cause classifier: exact K-nearest-neighbour search under
// a weighted mix of categorical mismatch and text cosine distance.

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/core_model.hpp"
#include "rtriage/featurize.hpp"

namespace rtriage {

struct DistanceWeights {
  double categorical = 0.5;
  double textual = 1.0;
};

struct DistanceParts {
  double categorical = 0;  // weighted mismatch fraction
  double textual = 0;      // weighted (1 - cos)
  double total() const { return categorical + textual; }
};

/// Throws PreconditionError when the blocks have different dimensions.
DistanceParts distance_parts(const FeatureVector& a, const FeatureVector& b, DistanceWeights w);
double distance(const FeatureVector& a, const FeatureVector& b, DistanceWeights w);

struct TrainingItem {
  std::string item_id;
  std::string label_id;
  FeatureVector vector;
  std::string text;  // composed text, kept for explanations
  bool operator==(const TrainingItem&) const = default;
};

struct ModelSnapshot {
  std::string version;
  Hyperparameters hyperparameters;
  FeatureMode feature_mode = FeatureMode::em_ss;
  TextVectorizerState vectorizer;
  std::optional<TextVectorizerState> summary_filter;
  CategoricalSchema schema;
  std::vector<RootCauseLabel> labels;
  std::vector<TrainingItem> items;
  std::vector<std::string> problem_group_ids;  // sorted

  bool in_problem_group(const std::string& item_id) const;
  void rebuild_index();

 private:
  std::unordered_set<std::string> problem_group_index_;
};

/// Items whose em+ss tf-idf vector has cosine above tau with an item of a
/// different label. Returns sorted item ids.
std::vector<std::string> detect_problem_group(const std::vector<Tokens>& texts,
                                              const std::vector<std::string>& labels,
                                              const std::vector<std::string>& item_ids, double tau);

struct FitInputs {
  std::vector<TrainingItem> items;
  std::vector<Tokens> problem_group_texts;  // em+ss tokens, parallel to items
  Hyperparameters hyperparameters;
  FeatureMode feature_mode = FeatureMode::em_ss;
  TextVectorizerState vectorizer;
  std::optional<TextVectorizerState> summary_filter;
  CategoricalSchema schema;
  std::vector<RootCauseLabel> labels;  // registry; derived from items when empty
  std::string version;
};

/// Throws PreconditionError on an empty training set.
ModelSnapshot fit(FitInputs inputs);

enum class FlagReason { uncertain, problem_group };
std::string_view to_string(FlagReason r);
FlagReason parse_flag_reason(std::string_view s);

struct Neighbor {
  std::string item_id;
  std::string label_id;
  double distance = 0;
  double categorical_part = 0;
  double textual_part = 0;
  bool operator==(const Neighbor&) const = default;
};

struct Prediction {
  std::string event_id;
  std::string label_id;
  double certainty = 0;
  bool flagged = false;
  std::optional<FlagReason> flag_reason;
  std::vector<Neighbor> neighbors;
  std::string model_version;
  bool operator==(const Prediction&) const = default;
};

/// Per-training-item distance components of one query, reusable across
/// weightings and K.
struct QueryComponents {
  std::vector<double> mismatch;  // unweighted categorical mismatch fraction
  std::vector<double> cosine;
};

QueryComponents query_components(const ModelSnapshot& snapshot, const FeatureVector& query);

struct PredictParams {
  int k = 5;
  DistanceWeights weights;
  double certainty_threshold = 0.9;
};

PredictParams params_of(const Hyperparameters& hp);

Prediction predict_from_components(const ModelSnapshot& snapshot, const QueryComponents& comps,
                                   const PredictParams& params, std::string event_id);

/// K nearest items (ties by item id), majority vote (ties by smaller summed
/// distance, then label id), certainty = votes / min(K, items). A problem-group neighbour
/// flags the prediction regardless of certainty.
Prediction predict(const ModelSnapshot& snapshot, const FeatureVector& query, std::string event_id);

struct ExplainedNeighbor {
  Neighbor neighbor;
  std::string text;
  bool in_problem_group = false;
};

struct Explanation {
  std::string event_id;
  std::string model_version;
  std::string label_id;
  std::vector<ExplainedNeighbor> neighbors;
  /// Mean distance of other-label neighbours minus mean distance of the voters.
  double margin = 0;
};

/// Throws PreconditionError when the prediction came from another snapshot version.
Explanation explain(const ModelSnapshot& snapshot, const Prediction& prediction);

void to_json(nlohmann::json& j, const ModelSnapshot& s);
void from_json(const nlohmann::json& j, ModelSnapshot& s);
void to_json(nlohmann::json& j, const Prediction& p);
void from_json(const nlohmann::json& j, Prediction& p);
void to_json(nlohmann::json& j, const Explanation& e);

std::string snapshot_to_string(const ModelSnapshot& s);
void save_snapshot(const ModelSnapshot& s, const std::filesystem::path& path);
ModelSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace rtriage
