#pragma once

// Cross-validation, metrics, hyperparameter search and the feature-mode /
// vectorizer / distance comparison grid.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/classifier.hpp"
#include "rtriage/pipeline.hpp"

namespace rtriage {

using Labels = std::vector<std::string>;

/// Rows are true labels, columns predicted labels; both over the sorted union
/// of labels seen in either array.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;
  std::size_t total() const;
  std::size_t trace() const;
};

struct ClassMetrics {
  std::string label_id;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

/// Throws PreconditionError on length mismatch or empty input.
ConfusionMatrix confusion(const Labels& y_true, const Labels& y_pred);
double accuracy(const Labels& y_true, const Labels& y_pred);
/// Per-class metrics for every class present in y_true, sorted by label.
std::vector<ClassMetrics> per_class_metrics(const Labels& y_true, const Labels& y_pred);
/// Unweighted mean F1 over classes present in y_true.
double f1_macro(const Labels& y_true, const Labels& y_pred);
/// Harmonic mean; 0 when both are 0.
double f1_comb(double f1_macro, double certainty_metric);
/// Share of correct predictions with certainty >= theta; 0 without correct predictions.
double certainty_metric(const std::vector<Prediction>& predictions, const Labels& y_true, double theta);

/// k disjoint test index sets covering [0, labels.size()). Each class is
/// shuffled and dealt round-robin, continuing from where the previous class
/// stopped, so per-class fold counts differ by at most one and singleton
/// classes land in exactly one fold. Throws PreconditionError if k < 2 or
/// there are fewer samples than folds.
std::vector<std::vector<std::size_t>> stratified_folds(const Labels& labels, int k, std::uint64_t seed);

struct FoldReport {
  double f1_macro = 0;
  double f1_comb = 0;
  double accuracy = 0;
  double certainty = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct CvReport {
  FeatureMode mode = FeatureMode::em_ss;
  VectorizerKind vectorizer = VectorizerKind::tfidf;
  Hyperparameters hyperparameters;
  std::uint64_t seed = 0;
  std::vector<FoldReport> folds;
  double mean_f1_macro = 0;
  double mean_f1_comb = 0;
  double mean_accuracy = 0;
  double mean_certainty = 0;
  std::vector<ClassMetrics> per_class;  // pooled out-of-fold predictions
  ConfusionMatrix confusion;            // pooled out-of-fold predictions
};

/// Refits vectorizers, summary filter, schema and classifier on every training
/// split; nothing from a test split is seen during fitting.
CvReport cross_validate(const Dataset& data, const FeatureConfig& config, std::uint64_t seed, int jobs = 1);

struct HyperparameterGrid {
  std::vector<int> k_neighbors{5};
  std::vector<double> w_categorical{0.5};
  std::vector<double> w_textual{1.0};
  std::vector<double> certainty_threshold{0.9};

  std::size_t size() const;
  /// Grid points in lexicographic order of (k, w_cat, w_txt, theta).
  std::vector<Hyperparameters> points(const Hyperparameters& base) const;
};

/// Evaluates each classifier setting on the same folds. Settings that only
/// change K, the distance weights or theta share one feature fit per fold.
std::vector<CvReport> cross_validate_grid(const Dataset& data, const FeatureConfig& config,
                                          const std::vector<Hyperparameters>& points, std::uint64_t seed,
                                          int jobs = 1);

struct SearchResult {
  Hyperparameters best;
  CvReport report;
  std::vector<CvReport> all;  // grid order
};

/// Highest mean F1-Macro; ties go to the lexicographically smallest point.
SearchResult hyperparameter_search(const Dataset& data, const FeatureConfig& config, const HyperparameterGrid& grid,
                                   std::uint64_t seed, int jobs = 1);

struct GateDecision {
  bool pass = true;
  double delta = 0;  // current - previous mean F1-Macro
  std::vector<std::string> reasons;
};

/// Review when the mean F1-Macro dropped by more than max_drop.
GateDecision regression_gate(const CvReport& current, const CvReport& previous, double max_drop = 0.02);

/// CSV of event_id, label and text embedding for the events of the top_n
/// classes ranked by problem-group membership count (ties by label).
/// Returns the number of rows written.
std::size_t export_embeddings(const Dataset& data, const FeatureConfig& config, std::size_t top_n_classes,
                              const std::filesystem::path& path);
std::size_t export_embeddings(const Dataset& data, const FeatureConfig& config, std::size_t top_n_classes,
                              std::ostream& out);

struct CompareRow {
  FeatureMode mode = FeatureMode::em_ss;
  VectorizerKind vectorizer = VectorizerKind::tfidf;
  double cd_f1_macro = 0;  // custom distance, w_cat tuned
  double cd_w_categorical = 0;
  double cd_f1_comb = 0;
  double cd_accuracy = 0;
  double ed_f1_macro = 0;  // w_cat = 0: text-only ranking, same as Euclidean
  double ed_f1_comb = 0;
  double ed_accuracy = 0;
};

struct CompareOptions {
  std::vector<FeatureMode> modes{FeatureMode::em_ss, FeatureMode::em_ss_summary, FeatureMode::em_summary};
  std::vector<VectorizerKind> vectorizers{VectorizerKind::tfidf, VectorizerKind::subword_embedding};
  /// Positive categorical weights the custom distance is tuned over.
  std::vector<double> w_categorical_grid{0.25, 0.5, 1.0};
  Hyperparameters hyperparameters;
  std::uint64_t seed = 7;
  int jobs = 1;
};

std::vector<CompareRow> compare(const Dataset& data, const CompareOptions& options);
std::string format_compare_table(const std::vector<CompareRow>& rows);
std::string format_cv_report(const CvReport& report);

void to_json(nlohmann::json& j, const ConfusionMatrix& c);
void from_json(const nlohmann::json& j, ConfusionMatrix& c);
void to_json(nlohmann::json& j, const CvReport& r);
void from_json(const nlohmann::json& j, CvReport& r);
void to_json(nlohmann::json& j, const HyperparameterGrid& g);
void from_json(const nlohmann::json& j, HyperparameterGrid& g);
void to_json(nlohmann::json& j, const GateDecision& g);
void to_json(nlohmann::json& j, const CompareRow& r);

}  // namespace rtriage
