#include "rtriage/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rtriage/error.hpp"
#include "rtriage/random.hpp"

namespace rtriage {

namespace {

void check_pair(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size())
    throw PreconditionError("label arrays differ in length (" + std::to_string(y_true.size()) + " vs " +
                            std::to_string(y_pred.size()) + ")");
  if (y_true.empty()) throw PreconditionError("empty label arrays");
}

double mean_of(const std::vector<FoldReport>& folds, double FoldReport::*field) {
  double s = 0;
  for (const auto& f : folds) s += f.*field;
  return folds.empty() ? 0 : s / static_cast<double>(folds.size());
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100 * x);
  return buf;
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (const auto& row : counts) s = std::accumulate(row.begin(), row.end(), s);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) s += counts[i][i];
  return s;
}

ConfusionMatrix confusion(const Labels& y_true, const Labels& y_pred) {
  check_pair(y_true, y_pred);
  std::set<std::string> all(y_true.begin(), y_true.end());
  all.insert(y_pred.begin(), y_pred.end());
  ConfusionMatrix m;
  m.labels.assign(all.begin(), all.end());
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < m.labels.size(); ++i) idx[m.labels[i]] = i;
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++m.counts[idx[y_true[i]]][idx[y_pred[i]]];
  return m;
}

double accuracy(const Labels& y_true, const Labels& y_pred) {
  check_pair(y_true, y_pred);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

std::vector<ClassMetrics> per_class_metrics(const Labels& y_true, const Labels& y_pred) {
  const ConfusionMatrix m = confusion(y_true, y_pred);
  const std::set<std::string> present(y_true.begin(), y_true.end());
  std::vector<ClassMetrics> out;
  for (std::size_t c = 0; c < m.labels.size(); ++c) {
    if (!present.count(m.labels[c])) continue;
    std::size_t tp = m.counts[c][c], support = 0, predicted = 0;
    for (std::size_t o = 0; o < m.labels.size(); ++o) {
      support += m.counts[c][o];
      predicted += m.counts[o][c];
    }
    ClassMetrics cm;
    cm.label_id = m.labels[c];
    cm.support = support;
    cm.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    cm.recall = static_cast<double>(tp) / static_cast<double>(support);
    cm.f1 = cm.precision + cm.recall > 0 ? 2 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    out.push_back(cm);
  }
  return out;
}

double f1_macro(const Labels& y_true, const Labels& y_pred) {
  const auto pcs = per_class_metrics(y_true, y_pred);
  double s = 0;
  for (const auto& c : pcs) s += c.f1;
  return s / static_cast<double>(pcs.size());
}

double f1_comb(double a, double b) { return a + b > 0 ? 2 * a * b / (a + b) : 0.0; }

double certainty_metric(const std::vector<Prediction>& predictions, const Labels& y_true, double theta) {
  if (predictions.size() != y_true.size()) throw PreconditionError("certainty_metric: length mismatch");
  std::size_t correct = 0, certain = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].label_id != y_true[i]) continue;
    ++correct;
    certain += predictions[i].certainty >= theta;
  }
  return correct ? static_cast<double>(certain) / static_cast<double>(correct) : 0.0;
}

std::vector<std::vector<std::size_t>> stratified_folds(const Labels& labels, int k, std::uint64_t seed) {
  if (k < 2) throw PreconditionError("stratified_folds: k must be at least 2");
  if (labels.size() < static_cast<std::size_t>(k))
    throw PreconditionError("stratified_folds: " + std::to_string(labels.size()) + " samples for " +
                            std::to_string(k) + " folds");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(mix64(seed));
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    for (std::size_t i : members) {
      folds[next].push_back(i);
      next = (next + 1) % folds.size();
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::size_t HyperparameterGrid::size() const {
  return k_neighbors.size() * w_categorical.size() * w_textual.size() * certainty_threshold.size();
}

std::vector<Hyperparameters> HyperparameterGrid::points(const Hyperparameters& base) const {
  auto sorted = [](auto v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  std::vector<Hyperparameters> out;
  for (int k : sorted(k_neighbors))
    for (double wc : sorted(w_categorical))
      for (double wt : sorted(w_textual))
        for (double th : sorted(certainty_threshold)) {
          Hyperparameters hp = base;
          hp.k_neighbors = k;
          hp.w_categorical = wc;
          hp.w_textual = wt;
          hp.certainty_threshold = th;
          out.push_back(hp);
        }
  return out;
}

std::vector<CvReport> cross_validate_grid(const Dataset& data, const FeatureConfig& config,
                                          const std::vector<Hyperparameters>& points, std::uint64_t seed, int jobs) {
  if (points.empty()) throw PreconditionError("cross_validate: empty grid");
  for (const auto& hp : points) validate(hp);
  Labels labels;
  for (const auto& le : data) labels.push_back(le.label.label_id);
  const auto folds = stratified_folds(labels, config.hyperparameters.cv_folds, seed);

  std::vector<CvReport> reports(points.size());
  std::vector<Labels> pooled_true(points.size()), pooled_pred(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    reports[p].mode = config.mode;
    reports[p].vectorizer = config.vectorizer;
    reports[p].hyperparameters = points[p];
    reports[p].seed = seed;
  }
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> is_test(data.size(), false);
    for (std::size_t i : folds[f]) is_test[i] = true;
    std::vector<const LabeledEvent*> train, test;
    for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? test : train).push_back(&data[i]);
    if (train.empty()) throw PreconditionError("cross_validate: a fold left no training data");

    const ModelSnapshot snap = train_snapshot(train, config, "cv-fold-" + std::to_string(f));
    const FittedFeatures feats = features_of(snap);
    const auto test_vectors = featurize(feats, test);
    std::vector<QueryComponents> comps(test.size());
    parallel_for(test.size(), jobs, [&](std::size_t i) { comps[i] = query_components(snap, test_vectors[i]); });

    Labels y_true;
    for (const auto* le : test) y_true.push_back(le->label.label_id);
    for (std::size_t p = 0; p < points.size(); ++p) {
      const PredictParams params = params_of(points[p]);
      std::vector<Prediction> preds(test.size());
      Labels y_pred(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) {
        preds[i] = predict_from_components(snap, comps[i], params, test[i]->event.event_id);
        y_pred[i] = preds[i].label_id;
      }
      FoldReport fr;
      fr.f1_macro = f1_macro(y_true, y_pred);
      fr.accuracy = accuracy(y_true, y_pred);
      fr.certainty = certainty_metric(preds, y_true, points[p].certainty_threshold);
      fr.f1_comb = f1_comb(fr.f1_macro, fr.certainty);
      fr.train_size = train.size();
      fr.test_size = test.size();
      reports[p].folds.push_back(fr);
      pooled_true[p].insert(pooled_true[p].end(), y_true.begin(), y_true.end());
      pooled_pred[p].insert(pooled_pred[p].end(), y_pred.begin(), y_pred.end());
    }
  }
  for (std::size_t p = 0; p < points.size(); ++p) {
    auto& r = reports[p];
    r.mean_f1_macro = mean_of(r.folds, &FoldReport::f1_macro);
    r.mean_f1_comb = mean_of(r.folds, &FoldReport::f1_comb);
    r.mean_accuracy = mean_of(r.folds, &FoldReport::accuracy);
    r.mean_certainty = mean_of(r.folds, &FoldReport::certainty);
    r.per_class = per_class_metrics(pooled_true[p], pooled_pred[p]);
    r.confusion = confusion(pooled_true[p], pooled_pred[p]);
  }
  return reports;
}

CvReport cross_validate(const Dataset& data, const FeatureConfig& config, std::uint64_t seed, int jobs) {
  return cross_validate_grid(data, config, {config.hyperparameters}, seed, jobs).front();
}

SearchResult hyperparameter_search(const Dataset& data, const FeatureConfig& config, const HyperparameterGrid& grid,
                                   std::uint64_t seed, int jobs) {
  if (grid.size() == 0) throw PreconditionError("hyperparameter_search: empty grid");
  SearchResult r;
  r.all = cross_validate_grid(data, config, grid.points(config.hyperparameters), seed, jobs);
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.all.size(); ++i)
    if (r.all[i].mean_f1_macro > r.all[best].mean_f1_macro) best = i;  // strict: earlier point wins ties
  r.best = r.all[best].hyperparameters;
  r.report = r.all[best];
  return r;
}

GateDecision regression_gate(const CvReport& current, const CvReport& previous, double max_drop) {
  GateDecision g;
  g.delta = current.mean_f1_macro - previous.mean_f1_macro;
  if (current.mean_f1_macro >= previous.mean_f1_macro - max_drop) return g;
  g.pass = false;
  g.reasons.push_back("mean F1-Macro fell from " + pct(previous.mean_f1_macro) + " to " +
                      pct(current.mean_f1_macro) + " (" + pct(g.delta) + " points, allowed " + pct(max_drop) + ")");
  std::map<std::string, double> before;
  for (const auto& c : previous.per_class) before[c.label_id] = c.f1;
  std::vector<std::pair<double, std::string>> declines;
  for (const auto& c : current.per_class)
    if (auto it = before.find(c.label_id); it != before.end() && c.f1 < it->second)
      declines.emplace_back(c.f1 - it->second, c.label_id);
  std::sort(declines.begin(), declines.end());
  for (std::size_t i = 0; i < declines.size() && i < 5; ++i)
    g.reasons.push_back("class " + declines[i].second + " F1 " + pct(declines[i].first) + " points");
  return g;
}

std::size_t export_embeddings(const Dataset& data, const FeatureConfig& config, std::size_t top_n_classes,
                              std::ostream& out) {
  if (data.empty()) throw PreconditionError("export_embeddings: empty dataset");
  std::vector<const LabeledEvent*> all;
  for (const auto& le : data) all.push_back(&le);
  const ModelSnapshot snap = train_snapshot(all, config, "export");

  std::map<std::string, std::size_t> group_count;
  for (const auto& it : snap.items) group_count[it.label_id] += snap.in_problem_group(it.item_id);
  std::vector<std::pair<std::string, std::size_t>> ranked(group_count.begin(), group_count.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_n_classes) ranked.resize(top_n_classes);
  std::set<std::string> keep;
  for (const auto& r : ranked) keep.insert(r.first);

  out << "event_id,label";
  for (std::size_t d = 0; d < snap.vectorizer.dimension(); ++d) out << ",e" << d;
  out << '\n';
  std::size_t rows = 0;
  char buf[40];
  for (const auto& it : snap.items) {
    if (!keep.count(it.label_id)) continue;
    out << it.item_id << ',' << it.label_id;
    for (double x : it.vector.text) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out << buf;
    }
    out << '\n';
    ++rows;
  }
  return rows;
}

std::size_t export_embeddings(const Dataset& data, const FeatureConfig& config, std::size_t top_n_classes,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return export_embeddings(data, config, top_n_classes, out);
}

std::vector<CompareRow> compare(const Dataset& data, const CompareOptions& o) {
  if (o.w_categorical_grid.empty()) throw PreconditionError("compare: empty categorical weight grid");
  std::vector<CompareRow> rows;
  for (FeatureMode mode : o.modes) {
    for (VectorizerKind vk : o.vectorizers) {
      FeatureConfig cfg{mode, vk, o.hyperparameters};
      std::vector<Hyperparameters> points;
      Hyperparameters ed = o.hyperparameters;
      ed.w_categorical = 0;
      points.push_back(ed);
      for (double w : o.w_categorical_grid) {
        Hyperparameters cd = o.hyperparameters;
        cd.w_categorical = w;
        points.push_back(cd);
      }
      const auto reports = cross_validate_grid(data, cfg, points, o.seed, o.jobs);
      std::size_t best = 1;
      for (std::size_t i = 2; i < reports.size(); ++i)
        if (reports[i].mean_f1_macro > reports[best].mean_f1_macro) best = i;
      CompareRow row;
      row.mode = mode;
      row.vectorizer = vk;
      row.ed_f1_macro = reports[0].mean_f1_macro;
      row.ed_f1_comb = reports[0].mean_f1_comb;
      row.ed_accuracy = reports[0].mean_accuracy;
      row.cd_f1_macro = reports[best].mean_f1_macro;
      row.cd_f1_comb = reports[best].mean_f1_comb;
      row.cd_accuracy = reports[best].mean_accuracy;
      row.cd_w_categorical = reports[best].hyperparameters.w_categorical;
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

std::string mode_label(FeatureMode m) {
  switch (m) {
    case FeatureMode::em: return "EM";
    case FeatureMode::em_ss: return "EM + SS";
    case FeatureMode::em_ss_summary: return "EM + SS + Summary";
    case FeatureMode::em_summary: return "EM + Summary";
  }
  return "";
}

}  // namespace

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %-10s %9s %9s %9s %9s %9s %9s %6s\n", "features", "vectorizer", "CD F1-M",
                "CD F1-C", "CD Acc", "ED F1-M", "ED F1-C", "ED Acc", "w_cat");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %-10s %9s %9s %9s %9s %9s %9s %6.2f\n", mode_label(r.mode).c_str(),
                  r.vectorizer == VectorizerKind::tfidf ? "TFIDF" : "sub-word", pct(r.cd_f1_macro).c_str(),
                  pct(r.cd_f1_comb).c_str(), pct(r.cd_accuracy).c_str(), pct(r.ed_f1_macro).c_str(),
                  pct(r.ed_f1_comb).c_str(), pct(r.ed_accuracy).c_str(), r.cd_w_categorical);
    out << buf;
  }
  return out.str();
}

std::string format_cv_report(const CvReport& r) {
  std::ostringstream out;
  char buf[256];
  out << "features " << mode_label(r.mode) << ", vectorizer " << to_string(r.vectorizer) << ", K "
      << r.hyperparameters.k_neighbors << ", w_cat " << r.hyperparameters.w_categorical << ", w_txt "
      << r.hyperparameters.w_textual << ", theta " << r.hyperparameters.certainty_threshold << ", seed " << r.seed
      << '\n';
  std::snprintf(buf, sizeof buf, "%-6s %9s %9s %9s %9s\n", "fold", "F1-Macro", "F1-Comb", "Accuracy", "Certain");
  out << buf;
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    const auto& f = r.folds[i];
    std::snprintf(buf, sizeof buf, "%-6zu %9s %9s %9s %9s\n", i + 1, pct(f.f1_macro).c_str(), pct(f.f1_comb).c_str(),
                  pct(f.accuracy).c_str(), pct(f.certainty).c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-6s %9s %9s %9s %9s\n", "mean", pct(r.mean_f1_macro).c_str(),
                pct(r.mean_f1_comb).c_str(), pct(r.mean_accuracy).c_str(), pct(r.mean_certainty).c_str());
  out << buf;
  return out.str();
}

void to_json(nlohmann::json& j, const ConfusionMatrix& c) { j = {{"labels", c.labels}, {"counts", c.counts}}; }

void from_json(const nlohmann::json& j, ConfusionMatrix& c) {
  c.labels = j.at("labels").get<std::vector<std::string>>();
  c.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
}

void to_json(nlohmann::json& j, const CvReport& r) {
  j = nlohmann::json{{"feature_mode", std::string(to_string(r.mode))},
                     {"vectorizer", std::string(to_string(r.vectorizer))},
                     {"hyperparameters", r.hyperparameters},
                     {"seed", r.seed},
                     {"mean_f1_macro", r.mean_f1_macro},
                     {"mean_f1_comb", r.mean_f1_comb},
                     {"mean_accuracy", r.mean_accuracy},
                     {"mean_certainty", r.mean_certainty},
                     {"confusion", r.confusion}};
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"f1_macro", f.f1_macro},
                     {"f1_comb", f.f1_comb},
                     {"accuracy", f.accuracy},
                     {"certainty", f.certainty},
                     {"train_size", f.train_size},
                     {"test_size", f.test_size}});
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class)
    pc.push_back({{"label_id", c.label_id},
                  {"precision", c.precision},
                  {"recall", c.recall},
                  {"f1", c.f1},
                  {"support", c.support}});
}

void from_json(const nlohmann::json& j, CvReport& r) {
  r = CvReport{};
  r.mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
  r.vectorizer = parse_vectorizer_kind(j.at("vectorizer").get<std::string>());
  r.hyperparameters = j.at("hyperparameters").get<Hyperparameters>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.mean_f1_macro = j.at("mean_f1_macro").get<double>();
  r.mean_f1_comb = j.value("mean_f1_comb", 0.0);
  r.mean_accuracy = j.value("mean_accuracy", 0.0);
  r.mean_certainty = j.value("mean_certainty", 0.0);
  if (j.contains("confusion")) r.confusion = j.at("confusion").get<ConfusionMatrix>();
  for (const auto& f : j.value("folds", nlohmann::json::array()))
    r.folds.push_back({f.at("f1_macro").get<double>(), f.value("f1_comb", 0.0), f.value("accuracy", 0.0),
                       f.value("certainty", 0.0), f.value("train_size", std::size_t{0}),
                       f.value("test_size", std::size_t{0})});
  for (const auto& c : j.value("per_class", nlohmann::json::array()))
    r.per_class.push_back({c.at("label_id").get<std::string>(), c.value("precision", 0.0), c.value("recall", 0.0),
                           c.at("f1").get<double>(), c.value("support", std::size_t{0})});
}

void to_json(nlohmann::json& j, const HyperparameterGrid& g) {
  j = {{"k_neighbors", g.k_neighbors},
       {"w_categorical", g.w_categorical},
       {"w_textual", g.w_textual},
       {"certainty_threshold", g.certainty_threshold}};
}

void from_json(const nlohmann::json& j, HyperparameterGrid& g) {
  const HyperparameterGrid d;
  g.k_neighbors = j.value("k_neighbors", d.k_neighbors);
  g.w_categorical = j.value("w_categorical", d.w_categorical);
  g.w_textual = j.value("w_textual", d.w_textual);
  g.certainty_threshold = j.value("certainty_threshold", d.certainty_threshold);
  if (g.size() == 0) throw ValidationError("hyperparameter grid has an empty axis");
}

void to_json(nlohmann::json& j, const GateDecision& g) {
  j = {{"decision", g.pass ? "pass" : "review"}, {"delta", g.delta}, {"reasons", g.reasons}};
}

void to_json(nlohmann::json& j, const CompareRow& r) {
  j = {{"feature_mode", std::string(to_string(r.mode))},
       {"vectorizer", std::string(to_string(r.vectorizer))},
       {"cd_f1_macro", r.cd_f1_macro},
       {"cd_f1_comb", r.cd_f1_comb},
       {"cd_accuracy", r.cd_accuracy},
       {"cd_w_categorical", r.cd_w_categorical},
       {"ed_f1_macro", r.ed_f1_macro},
       {"ed_f1_comb", r.ed_f1_comb},
       {"ed_accuracy", r.ed_accuracy}};
}

}  // namespace rtriage
