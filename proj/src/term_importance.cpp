#include <algorithm>
#include <set>
#include <unordered_map>

#include "rtriage/error.hpp"
#include "rtriage/featurize.hpp"

namespace rtriage {

namespace {

// Pearson contribution of one observed cell; zero-expectation cells add nothing.
double cell(double observed, double expected) {
  if (expected <= 0) return 0;
  const double d = observed - expected;
  return d * d / expected;
}

void rank(std::vector<TermScore>& v) {
  std::sort(v.begin(), v.end(), [](const TermScore& a, const TermScore& b) {
    return a.score != b.score ? a.score > b.score : a.term < b.term;
  });
}

}  // namespace

TermImportanceReport chi2_importance(const std::vector<Tokens>& corpus,
                                     const std::vector<std::string>& labels,
                                     std::size_t per_class_top) {
  if (corpus.size() != labels.size()) throw PreconditionError("chi2_importance: size mismatch");
  std::vector<std::string> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw PreconditionError("chi2_importance: need at least two classes");

  std::unordered_map<std::string, std::size_t> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) class_index[classes[c]] = c;
  std::vector<double> class_docs(classes.size(), 0.0);
  // term -> per-class count of documents containing it
  std::map<std::string, std::vector<double>> present;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const std::size_t c = class_index[labels[d]];
    class_docs[c] += 1;
    std::set<std::string> uniq(corpus[d].begin(), corpus[d].end());
    for (const auto& t : uniq) {
      auto& row = present[t];
      if (row.empty()) row.assign(classes.size(), 0.0);
      row[c] += 1;
    }
  }

  const double n = static_cast<double>(corpus.size());
  TermImportanceReport report;
  std::vector<std::vector<TermScore>> per_class(classes.size());
  for (const auto& [term, row] : present) {
    double with = 0;
    for (double x : row) with += x;
    const double without = n - with;
    double total = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const double in_c = class_docs[c];
      // column contribution of the 2 x C table
      total += cell(row[c], with * in_c / n) + cell(in_c - row[c], without * in_c / n);
      // one-vs-rest 2 x 2 table
      const double rest = n - in_c;
      const double rest_with = with - row[c];
      const double ovr = cell(row[c], with * in_c / n) + cell(in_c - row[c], without * in_c / n) +
                         cell(rest_with, with * rest / n) + cell(rest - rest_with, without * rest / n);
      per_class[c].push_back({term, ovr});
    }
    report.ranked.push_back({term, total});
  }
  rank(report.ranked);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    rank(per_class[c]);
    if (per_class[c].size() > per_class_top) per_class[c].resize(per_class_top);
    report.per_class_top[classes[c]] = std::move(per_class[c]);
  }
  return report;
}

}  // namespace rtriage
