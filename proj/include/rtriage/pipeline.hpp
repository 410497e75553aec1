#pragma once

// Glue between the stages: labeled datasets with context summaries, fitting the
// feature extractors on a training split, and classifying a whole replay.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtriage/classifier.hpp"
#include "rtriage/context.hpp"
#include "rtriage/core_model.hpp"
#include "rtriage/featurize.hpp"
#include "rtriage/replay_log.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

using Dataset = std::vector<LabeledEvent>;

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
void write_dataset(const Dataset& data, std::ostream& out);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
/// rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Summary text per failed event id; events with an empty context get none.
/// Summaries come back in log order regardless of `jobs`.
std::map<std::string, std::string> summarize_failures(const ReplayLog& log, Summarizer& summarizer,
                                                      int jobs = 1);

/// One LabeledEvent per failed event that has a ground-truth label, in log
/// order. Summaries are attached when a summarizer is given.
Dataset build_dataset(const ReplayLog& log, const GroundTruth& truth, Summarizer* summarizer,
                      int jobs = 1);

struct FeatureConfig {
  FeatureMode mode = FeatureMode::em_ss;
  VectorizerKind vectorizer = VectorizerKind::tfidf;
  Hyperparameters hyperparameters;
};

/// Feature extractors fitted on one training split.
struct FittedFeatures {
  FeatureMode mode = FeatureMode::em_ss;
  TextVectorizerState vectorizer;
  std::optional<TextVectorizerState> summary_filter;  // summary modes only
  int summary_top_terms = 0;
  CategoricalSchema schema;
};

FittedFeatures fit_features(const std::vector<const LabeledEvent*>& train, const FeatureConfig& config);

/// Tokens of the text block: error message, statement and (filtered) summary
/// as selected by the mode.
Tokens feature_tokens(const FittedFeatures& f, const ReplayEvent& event,
                      const std::optional<std::string>& summary);

std::vector<FeatureVector> featurize(const FittedFeatures& f, const std::vector<const LabeledEvent*>& items);
FeatureVector featurize(const FittedFeatures& f, const ReplayEvent& event,
                        const std::optional<std::string>& summary);

FittedFeatures features_of(const ModelSnapshot& snapshot);

/// Fits extractors and classifier on the given items.
ModelSnapshot train_snapshot(const std::vector<const LabeledEvent*>& train, const FeatureConfig& config,
                             std::string version, std::vector<RootCauseLabel> registry = {});
ModelSnapshot train_snapshot(const Dataset& data, const FeatureConfig& config, std::string version,
                             std::vector<RootCauseLabel> registry = {});

struct ClassifyOptions {
  int jobs = 1;
};

struct ReplayClassification {
  std::vector<Prediction> predictions;  // log order
  std::map<std::string, std::string> summaries;
};

/// Predicts every failed event of the log. The summarizer is required when the
/// snapshot's feature mode uses summaries.
ReplayClassification classify_replay(const ModelSnapshot& snapshot, const ReplayLog& log, Summarizer* summarizer,
                                     const ClassifyOptions& options = {});

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out);

}  // namespace rtriage
