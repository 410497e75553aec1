#include "rtriage/pipeline.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "rtriage/error.hpp"

namespace rtriage {

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(lineno, "not a JSON object");
    try {
      out.push_back(j.get<LabeledEvent>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    const auto v = validate_event(out.back().event);
    if (!v.ok()) throw ValidationError("line " + std::to_string(lineno) + ": " + v.violations.front());
  }
  return out;
}

void write_dataset(const Dataset& data, std::ostream& out) {
  for (const auto& e : data) out << nlohmann::json(e).dump() << '\n';
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_dataset(data, out);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; !stop && (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          stop = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::map<std::string, std::string> summarize_failures(const ReplayLog& log, Summarizer& summarizer, int jobs) {
  const auto contexts = collect_all(log);
  std::vector<std::optional<std::string>> texts(contexts.size());
  parallel_for(contexts.size(), jobs, [&](std::size_t i) {
    if (!contexts[i].items.empty()) texts[i] = summary_to_text(summarizer.summarize(contexts[i]));
  });
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < contexts.size(); ++i)
    if (texts[i]) out.emplace(contexts[i].target_event_id, std::move(*texts[i]));
  return out;
}

Dataset build_dataset(const ReplayLog& log, const GroundTruth& truth, Summarizer* summarizer, int jobs) {
  std::map<std::string, std::string> summaries;
  if (summarizer) summaries = summarize_failures(log, *summarizer, jobs);
  Dataset out;
  for (const auto& e : log.events) {
    if (e.status != EventStatus::failed) continue;
    auto t = truth.find(e.event_id);
    if (t == truth.end()) continue;
    LabeledEvent le;
    le.event = e;
    le.label = {t->second, t->second};
    le.label_source = LabelSource::operator_reclassified;
    le.certainty_at_labeling = 1.0;
    if (auto s = summaries.find(e.event_id); s != summaries.end()) le.summary_text = s->second;
    out.push_back(std::move(le));
  }
  return out;
}

namespace {

Tokens text_tokens(const ReplayEvent& e, FeatureMode mode) {
  return preprocess(compose_text(e, std::nullopt, mode));
}

Tokens summary_tokens(const FittedFeatures& f, const std::optional<std::string>& summary) {
  if (!summary) return {};
  Tokens t = preprocess(*summary);
  if (f.summary_filter) t = tfidf_term_filter(t, *f.summary_filter, static_cast<std::size_t>(f.summary_top_terms));
  return t;
}

}  // namespace

FittedFeatures fit_features(const std::vector<const LabeledEvent*>& train, const FeatureConfig& config) {
  if (train.empty()) throw PreconditionError("fit_features: empty training split");
  const auto& hp = config.hyperparameters;
  FittedFeatures f;
  f.mode = config.mode;
  std::vector<const ReplayEvent*> events;
  for (const auto* le : train) events.push_back(&le->event);
  f.schema = CategoricalSchema::fit(events);

  if (uses_summary(config.mode)) {
    std::vector<Tokens> summaries;
    for (const auto* le : train)
      if (le->summary_text) summaries.push_back(preprocess(*le->summary_text));
    if (!summaries.empty()) {
      f.summary_filter = fit_tfidf(summaries);
      f.summary_top_terms = hp.tfidf_top_terms;
    }
  }
  std::vector<Tokens> corpus;
  corpus.reserve(train.size());
  for (const auto* le : train) corpus.push_back(feature_tokens(f, le->event, le->summary_text));
  if (config.vectorizer == VectorizerKind::tfidf)
    f.vectorizer = fit_tfidf(corpus);
  else
    f.vectorizer = fit_subword(corpus, hp.embed_dim, hp.ngram_min, hp.ngram_max, hp.hash_seed);
  return f;
}

Tokens feature_tokens(const FittedFeatures& f, const ReplayEvent& event, const std::optional<std::string>& summary) {
  const FeatureMode base = f.mode == FeatureMode::em_ss_summary ? FeatureMode::em_ss : FeatureMode::em;
  Tokens t = text_tokens(event, uses_summary(f.mode) ? base : f.mode);
  if (uses_summary(f.mode)) {
    Tokens s = summary_tokens(f, summary);
    t.insert(t.end(), s.begin(), s.end());
  }
  return t;
}

std::vector<FeatureVector> featurize(const FittedFeatures& f, const std::vector<const LabeledEvent*>& items) {
  std::vector<Tokens> docs;
  docs.reserve(items.size());
  for (const auto* le : items) docs.push_back(feature_tokens(f, le->event, le->summary_text));
  auto vecs = transform_batch(f.vectorizer, docs);
  std::vector<FeatureVector> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back(encode(items[i]->event, std::move(vecs[i]), f.schema));
  return out;
}

FeatureVector featurize(const FittedFeatures& f, const ReplayEvent& event, const std::optional<std::string>& summary) {
  return encode(event, transform(f.vectorizer, feature_tokens(f, event, summary)), f.schema);
}

FittedFeatures features_of(const ModelSnapshot& s) {
  FittedFeatures f;
  f.mode = s.feature_mode;
  f.vectorizer = s.vectorizer;
  f.summary_filter = s.summary_filter;
  f.summary_top_terms = s.summary_filter ? s.hyperparameters.tfidf_top_terms : 0;
  f.schema = s.schema;
  return f;
}

ModelSnapshot train_snapshot(const std::vector<const LabeledEvent*>& train, const FeatureConfig& config,
                             std::string version, std::vector<RootCauseLabel> registry) {
  FittedFeatures f = fit_features(train, config);
  const auto vectors = featurize(f, train);
  FitInputs in;
  in.hyperparameters = config.hyperparameters;
  in.feature_mode = config.mode;
  in.version = std::move(version);
  in.labels = std::move(registry);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& le = *train[i];
    in.items.push_back({le.event.event_id, le.label.label_id, vectors[i],
                        compose_text(le.event, le.summary_text, config.mode)});
    in.problem_group_texts.push_back(text_tokens(le.event, FeatureMode::em_ss));
  }
  in.vectorizer = std::move(f.vectorizer);
  in.summary_filter = std::move(f.summary_filter);
  in.schema = std::move(f.schema);
  return fit(std::move(in));
}

ModelSnapshot train_snapshot(const Dataset& data, const FeatureConfig& config, std::string version,
                             std::vector<RootCauseLabel> registry) {
  std::vector<const LabeledEvent*> ptrs;
  for (const auto& le : data) ptrs.push_back(&le);
  return train_snapshot(ptrs, config, std::move(version), std::move(registry));
}

ReplayClassification classify_replay(const ModelSnapshot& snapshot, const ReplayLog& log, Summarizer* summarizer,
                                     const ClassifyOptions& options) {
  ReplayClassification out;
  if (uses_summary(snapshot.feature_mode)) {
    if (!summarizer) throw PreconditionError("feature mode " + std::string(to_string(snapshot.feature_mode)) +
                                             " needs a summarizer");
    out.summaries = summarize_failures(log, *summarizer, options.jobs);
  }
  const FittedFeatures f = features_of(snapshot);
  std::vector<const ReplayEvent*> failed;
  for (const auto& e : log.events)
    if (e.status == EventStatus::failed) failed.push_back(&e);
  out.predictions.resize(failed.size());
  parallel_for(failed.size(), options.jobs, [&](std::size_t i) {
    std::optional<std::string> summary;
    if (auto s = out.summaries.find(failed[i]->event_id); s != out.summaries.end()) summary = s->second;
    out.predictions[i] = predict(snapshot, featurize(f, *failed[i], summary), failed[i]->event_id);
  });
  return out;
}

void write_predictions(const std::vector<Prediction>& predictions, std::ostream& out) {
  for (const auto& p : predictions) out << nlohmann::json(p).dump() << '\n';
}

}  // namespace rtriage
