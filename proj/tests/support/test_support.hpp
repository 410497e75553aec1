#pragma once

// Fixtures and brute-force reference implementations shared by the unit and
// acceptance tests. The oracles recompute every quantity from its definition
// and do not call the library code they are compared against.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rtriage/classifier.hpp"
#include "rtriage/context.hpp"
#include "rtriage/core_model.hpp"
#include "rtriage/random.hpp"
#include "rtriage/replay_log.hpp"

namespace rtriage::testing {

// ---- fixtures ---------------------------------------------------------------

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rtriage");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

ReplayEvent failed_event(std::string id, std::string session, std::uint64_t seq, std::string statement,
                         std::string error, std::int64_t code = 100, std::string replay = "R1");
ReplayEvent skipped_event(std::string id, std::string session, std::uint64_t seq, std::string statement,
                          std::string reason = "Skipped", std::string replay = "R1");
ReplayEvent ok_event(std::string id, std::string session, std::uint64_t seq, std::string statement,
                     std::string replay = "R1");

ReplayLog make_log(std::vector<ReplayEvent> events, std::string replay = "R1");

/// Random small replay: few sessions, a small statement pool so hashes repeat.
ReplayLog random_log(Rng& rng, std::size_t max_events, std::string replay = "R1");

/// Labeled events whose classes use disjoint vocabularies.
std::vector<LabeledEvent> separable_dataset(int classes, int per_class, std::uint64_t seed = 1);

LabeledEvent labeled(const ReplayEvent& e, const std::string& label,
                     LabelSource source = LabelSource::operator_reclassified, double certainty = 1.0,
                     std::optional<std::string> summary = std::nullopt);

/// Random unit vector; dim entries drawn uniform in [-1, 1].
std::vector<double> random_unit(Rng& rng, std::size_t dim);

/// Snapshot over explicit vectors with an explicit problem group.
ModelSnapshot snapshot_of(const std::vector<FeatureVector>& vectors, const std::vector<std::string>& labels,
                          const Hyperparameters& hp, const std::vector<std::string>& problem_group = {},
                          std::string version = "v-test");

// ---- oracles ----------------------------------------------------------------

namespace oracle {

struct Confusion {
  std::vector<std::string> labels;  // sorted union
  std::vector<std::vector<std::size_t>> counts;
};

Confusion confusion(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred);
double accuracy(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred);
/// Mean F1 over the classes of y_true; precision 0 when nothing was predicted.
double f1_macro(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred);

/// Cosine of two blocks under the distance definition: zero vectors give 0,
/// equal non-zero vectors give 1.
double cosine(const std::vector<double>& a, const std::vector<double>& b);
double distance(const FeatureVector& a, const FeatureVector& b, double w_cat, double w_txt);

struct Knn {
  std::string label;
  double certainty = 0;
  bool flagged = false;
  std::optional<FlagReason> reason;
  std::vector<std::string> neighbor_ids;
};

/// Scores every training item, sorts all of them, votes.
Knn knn(const ModelSnapshot& snapshot, const FeatureVector& query);

/// Triple filter and earliest-per-hash dedup over the whole log.
std::vector<ReplayEvent> context(const ReplayLog& log, const std::string& target);

/// Smoothed tf-idf fitted on `texts`, then every cross-label pair compared.
std::set<std::string> problem_group(const std::vector<std::vector<std::string>>& texts,
                                    const std::vector<std::string>& labels, const std::vector<std::string>& ids,
                                    double tau);

/// Pearson chi-squared of the term-presence x class table, per term.
std::map<std::string, double> chi2(const std::vector<std::vector<std::string>>& corpus,
                                   const std::vector<std::string>& labels);

}  // namespace oracle

}  // namespace rtriage::testing
