#include "rtriage/classifier.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rtriage/error.hpp"

namespace rtriage {

namespace {

double mismatch_fraction(const FeatureVector& a, const FeatureVector& b) {
  int diff = 0;
  for (std::size_t i = 0; i < kCategoricalAttributeCount; ++i) diff += a.categorical[i] != b.categorical[i];
  return static_cast<double>(diff) / static_cast<double>(kCategoricalAttributeCount);
}

// Text blocks have norm 0 or 1, so the dot product is the cosine. Identical
// non-zero blocks get exactly 1.
double block_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  bool same = true;
  bool nonzero = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
    same = same && a[i] == b[i];
    nonzero = nonzero || a[i] != 0;
  }
  if (same) return nonzero ? 1.0 : 0.0;
  return std::clamp(s, -1.0, 1.0);
}

void check_dims(const FeatureVector& a, const FeatureVector& b) {
  if (a.categorical_width != b.categorical_width || a.text.size() != b.text.size())
    throw PreconditionError("feature vectors have different dimensions");
}

}  // namespace

DistanceParts distance_parts(const FeatureVector& a, const FeatureVector& b, DistanceWeights w) {
  check_dims(a, b);
  return {w.categorical * mismatch_fraction(a, b), w.textual * (1.0 - block_cosine(a.text, b.text))};
}

double distance(const FeatureVector& a, const FeatureVector& b, DistanceWeights w) {
  return distance_parts(a, b, w).total();
}

bool ModelSnapshot::in_problem_group(const std::string& item_id) const {
  return problem_group_index_.count(item_id) > 0;
}

void ModelSnapshot::rebuild_index() {
  problem_group_index_ = {problem_group_ids.begin(), problem_group_ids.end()};
}

std::vector<std::string> detect_problem_group(const std::vector<Tokens>& texts,
                                              const std::vector<std::string>& labels,
                                              const std::vector<std::string>& item_ids, double tau) {
  if (texts.size() != labels.size() || texts.size() != item_ids.size())
    throw PreconditionError("detect_problem_group: size mismatch");
  if (texts.size() < 2) return {};

  // Identical token multisets give identical vectors; compare each distinct
  // document once.
  std::map<Tokens, std::size_t> doc_index;
  std::vector<std::size_t> doc_of(texts.size());
  std::vector<Tokens> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Tokens key = texts[i];
    std::sort(key.begin(), key.end());
    auto [it, fresh] = doc_index.emplace(key, docs.size());
    if (fresh) docs.push_back(std::move(key));
    doc_of[i] = it->second;
  }
  std::vector<std::vector<std::string>> doc_labels(docs.size());
  for (std::size_t i = 0; i < texts.size(); ++i) doc_labels[doc_of[i]].push_back(labels[i]);
  for (auto& l : doc_labels) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }

  const TextVectorizerState tfidf = fit_tfidf(texts);
  const auto vecs = transform_batch(tfidf, docs);

  // Labels of every document more than tau-similar to each document,
  // itself included.
  std::vector<std::vector<std::string>> near(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (std::size_t j = i; j < docs.size(); ++j) {
      const double c = i == j ? (l2_norm(vecs[i]) > 0 ? 1.0 : 0.0) : dot(vecs[i], vecs[j]);
      if (c > tau) {
        near[i].insert(near[i].end(), doc_labels[j].begin(), doc_labels[j].end());
        if (i != j) near[j].insert(near[j].end(), doc_labels[i].begin(), doc_labels[i].end());
      }
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& n = near[doc_of[i]];
    if (std::any_of(n.begin(), n.end(), [&](const std::string& l) { return l != labels[i]; }))
      out.push_back(item_ids[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ModelSnapshot fit(FitInputs in) {
  if (in.items.empty()) throw PreconditionError("fit: empty training set");
  validate(in.hyperparameters);
  if (in.problem_group_texts.size() != in.items.size())
    throw PreconditionError("fit: problem-group texts must parallel the items");
  const auto dim = in.items.front().vector.text.size();
  const auto width = in.items.front().vector.categorical_width;
  for (const auto& it : in.items)
    if (it.vector.text.size() != dim || it.vector.categorical_width != width)
      throw PreconditionError("fit: training vectors have different dimensions");

  ModelSnapshot s;
  s.version = std::move(in.version);
  s.hyperparameters = in.hyperparameters;
  s.feature_mode = in.feature_mode;
  s.vectorizer = std::move(in.vectorizer);
  s.summary_filter = std::move(in.summary_filter);
  s.schema = std::move(in.schema);
  std::vector<std::string> labels, ids;
  for (const auto& it : in.items) {
    labels.push_back(it.label_id);
    ids.push_back(it.item_id);
  }
  s.problem_group_ids =
      detect_problem_group(in.problem_group_texts, labels, ids, in.hyperparameters.problem_group_threshold);
  if (in.labels.empty()) {
    std::vector<std::string> uniq = labels;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& l : uniq) in.labels.push_back({l, l});
  } else {
    for (const auto& l : labels)
      if (std::none_of(in.labels.begin(), in.labels.end(), [&](const RootCauseLabel& r) { return r.label_id == l; }))
        throw PreconditionError("fit: label '" + l + "' is not in the registry");
  }
  s.labels = std::move(in.labels);
  s.items = std::move(in.items);
  s.rebuild_index();
  return s;
}

std::string_view to_string(FlagReason r) { return r == FlagReason::uncertain ? "uncertain" : "problem_group"; }

FlagReason parse_flag_reason(std::string_view s) {
  if (s == "uncertain") return FlagReason::uncertain;
  if (s == "problem_group") return FlagReason::problem_group;
  throw ValidationError("unknown flag reason '" + std::string(s) + "'");
}

QueryComponents query_components(const ModelSnapshot& snapshot, const FeatureVector& query) {
  QueryComponents c;
  c.mismatch.reserve(snapshot.items.size());
  c.cosine.reserve(snapshot.items.size());
  // tf-idf queries are sparse: only their non-zero coordinates enter the dot.
  std::vector<std::size_t> nz;
  for (std::size_t i = 0; i < query.text.size(); ++i)
    if (query.text[i] != 0) nz.push_back(i);
  const bool sparse = nz.size() * 4 < query.text.size();
  for (const auto& it : snapshot.items) {
    check_dims(query, it.vector);
    c.mismatch.push_back(mismatch_fraction(query, it.vector));
    if (!sparse) {
      c.cosine.push_back(block_cosine(query.text, it.vector.text));
      continue;
    }
    double s = 0;
    for (std::size_t i : nz) s += query.text[i] * it.vector.text[i];
    // Possible exact duplicate: settle it with the full comparison.
    c.cosine.push_back(s > 1 - 1e-9 ? block_cosine(query.text, it.vector.text) : s);
  }
  return c;
}

PredictParams params_of(const Hyperparameters& hp) {
  return {hp.k_neighbors, {hp.w_categorical, hp.w_textual}, hp.certainty_threshold};
}

Prediction predict_from_components(const ModelSnapshot& snapshot, const QueryComponents& comps,
                                   const PredictParams& params, std::string event_id) {
  const std::size_t n = snapshot.items.size();
  if (n == 0) throw PreconditionError("predict: snapshot has no training items");
  if (params.k < 1) throw PreconditionError("predict: k must be positive");
  std::vector<double> cat(n), txt(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    cat[i] = params.weights.categorical * comps.mismatch[i];
    txt[i] = params.weights.textual * (1.0 - comps.cosine[i]);
    d[i] = cat[i] + txt[i];
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.k), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto closer = [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return snapshot.items[a].item_id < snapshot.items[b].item_id;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);

  Prediction p;
  p.event_id = std::move(event_id);
  p.model_version = snapshot.version;
  std::map<std::string, std::pair<int, double>> votes;  // label -> (votes, summed distance)
  bool touches_group = false;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    const auto& item = snapshot.items[i];
    p.neighbors.push_back({item.item_id, item.label_id, d[i], cat[i], txt[i]});
    auto& v = votes[item.label_id];
    ++v.first;
    v.second += d[i];
    touches_group = touches_group || snapshot.in_problem_group(item.item_id);
  }
  const std::pair<const std::string, std::pair<int, double>>* best = nullptr;
  for (const auto& entry : votes) {  // ascending label id
    if (!best || entry.second.first > best->second.first ||
        (entry.second.first == best->second.first && entry.second.second < best->second.second))
      best = &entry;
  }
  p.label_id = best->first;
  p.certainty = static_cast<double>(best->second.first) / static_cast<double>(k);
  if (touches_group) p.flag_reason = FlagReason::problem_group;
  else if (p.certainty < params.certainty_threshold) p.flag_reason = FlagReason::uncertain;
  p.flagged = p.flag_reason.has_value();
  return p;
}

Prediction predict(const ModelSnapshot& snapshot, const FeatureVector& query, std::string event_id) {
  return predict_from_components(snapshot, query_components(snapshot, query), params_of(snapshot.hyperparameters),
                                 std::move(event_id));
}

Explanation explain(const ModelSnapshot& snapshot, const Prediction& prediction) {
  if (prediction.model_version != snapshot.version)
    throw PreconditionError("prediction was made by model '" + prediction.model_version + "', not '" +
                            snapshot.version + "'");
  std::unordered_map<std::string, const TrainingItem*> by_id;
  for (const auto& it : snapshot.items) by_id.emplace(it.item_id, &it);
  Explanation e;
  e.event_id = prediction.event_id;
  e.model_version = snapshot.version;
  e.label_id = prediction.label_id;
  double own = 0, other = 0;
  int own_n = 0, other_n = 0;
  for (const auto& n : prediction.neighbors) {
    auto it = by_id.find(n.item_id);
    if (it == by_id.end()) throw PreconditionError("neighbor '" + n.item_id + "' is not in the snapshot");
    e.neighbors.push_back({n, it->second->text, snapshot.in_problem_group(n.item_id)});
    if (n.label_id == prediction.label_id) {
      own += n.distance;
      ++own_n;
    } else {
      other += n.distance;
      ++other_n;
    }
  }
  if (own_n && other_n) e.margin = other / other_n - own / own_n;
  return e;
}

void to_json(nlohmann::json& j, const ModelSnapshot& s) {
  j = nlohmann::json{{"format", "rtriage-snapshot/1"},
                     {"version", s.version},
                     {"hyperparameters", s.hyperparameters},
                     {"feature_mode", std::string(to_string(s.feature_mode))},
                     {"vectorizer", s.vectorizer},
                     {"schema", s.schema},
                     {"problem_group_ids", s.problem_group_ids}};
  if (s.summary_filter) j["summary_filter"] = *s.summary_filter;
  auto& labels = j["labels"] = nlohmann::json::array();
  for (const auto& l : s.labels) labels.push_back({{"label_id", l.label_id}, {"display_name", l.display_name}});
  auto& items = j["items"] = nlohmann::json::array();
  for (const auto& it : s.items)
    items.push_back({{"item_id", it.item_id}, {"label_id", it.label_id}, {"vector", it.vector}, {"text", it.text}});
}

void from_json(const nlohmann::json& j, ModelSnapshot& s) {
  if (j.value("format", std::string()) != "rtriage-snapshot/1") throw ParseError(0, "not a snapshot document");
  s = ModelSnapshot{};
  s.version = j.at("version").get<std::string>();
  s.hyperparameters = j.at("hyperparameters").get<Hyperparameters>();
  s.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
  s.vectorizer = j.at("vectorizer").get<TextVectorizerState>();
  if (j.contains("summary_filter")) s.summary_filter = j.at("summary_filter").get<TextVectorizerState>();
  s.schema = j.at("schema").get<CategoricalSchema>();
  s.problem_group_ids = j.at("problem_group_ids").get<std::vector<std::string>>();
  for (const auto& l : j.at("labels"))
    s.labels.push_back({l.at("label_id").get<std::string>(), l.at("display_name").get<std::string>()});
  for (const auto& it : j.at("items"))
    s.items.push_back({it.at("item_id").get<std::string>(), it.at("label_id").get<std::string>(),
                       it.at("vector").get<FeatureVector>(), it.value("text", std::string())});
  s.rebuild_index();
}

void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{{"event_id", p.event_id},
                     {"label_id", p.label_id},
                     {"certainty", p.certainty},
                     {"flagged", p.flagged},
                     {"model_version", p.model_version}};
  if (p.flag_reason) j["flag_reason"] = std::string(to_string(*p.flag_reason));
  auto& ns = j["neighbors"] = nlohmann::json::array();
  for (const auto& n : p.neighbors)
    ns.push_back({{"item_id", n.item_id},
                  {"label_id", n.label_id},
                  {"distance", n.distance},
                  {"categorical_part", n.categorical_part},
                  {"textual_part", n.textual_part}});
}

void from_json(const nlohmann::json& j, Prediction& p) {
  p = Prediction{};
  p.event_id = j.at("event_id").get<std::string>();
  p.label_id = j.at("label_id").get<std::string>();
  p.certainty = j.at("certainty").get<double>();
  p.flagged = j.at("flagged").get<bool>();
  p.model_version = j.value("model_version", std::string());
  if (j.contains("flag_reason")) p.flag_reason = parse_flag_reason(j.at("flag_reason").get<std::string>());
  for (const auto& n : j.at("neighbors"))
    p.neighbors.push_back({n.at("item_id").get<std::string>(), n.at("label_id").get<std::string>(),
                           n.at("distance").get<double>(), n.value("categorical_part", 0.0),
                           n.value("textual_part", 0.0)});
}

void to_json(nlohmann::json& j, const Explanation& e) {
  j = nlohmann::json{{"event_id", e.event_id},
                     {"model_version", e.model_version},
                     {"label_id", e.label_id},
                     {"margin", e.margin}};
  auto& ns = j["neighbors"] = nlohmann::json::array();
  for (const auto& n : e.neighbors)
    ns.push_back({{"item_id", n.neighbor.item_id},
                  {"label_id", n.neighbor.label_id},
                  {"distance", n.neighbor.distance},
                  {"categorical_part", n.neighbor.categorical_part},
                  {"textual_part", n.neighbor.textual_part},
                  {"text", n.text},
                  {"in_problem_group", n.in_problem_group}});
}

std::string snapshot_to_string(const ModelSnapshot& s) { return nlohmann::json(s).dump(); }

void save_snapshot(const ModelSnapshot& s, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << snapshot_to_string(s);
  }
  std::filesystem::rename(tmp, path);
}

ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(0, path.string() + " is not JSON");
  return j.get<ModelSnapshot>();
}

}  // namespace rtriage
