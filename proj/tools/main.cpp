// replay-triage: batch front end for generation, classification,
// summarization, evaluation and the HTTP service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rtriage/classifier.hpp"
#include "rtriage/config.hpp"
#include "rtriage/context.hpp"
#include "rtriage/error.hpp"
#include "rtriage/evaluation.hpp"
#include "rtriage/pipeline.hpp"
#include "rtriage/replay_log.hpp"
#include "rtriage/service.hpp"
#include "rtriage/summarizer.hpp"
#include "rtriage/synth.hpp"

using namespace rtriage;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> vectorizer;
  std::optional<int> k;
  std::optional<double> theta;
  std::optional<double> tau;
  bool offline = false;
  std::optional<int> jobs;
  std::string output;
  std::string format = "text";
};

Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.mode) cfg.feature_mode = parse_feature_mode(*c.mode);
  if (c.vectorizer) cfg.vectorizer = parse_vectorizer_kind(*c.vectorizer);
  if (c.k) cfg.hyperparameters.k_neighbors = *c.k;
  if (c.theta) cfg.hyperparameters.certainty_threshold = *c.theta;
  if (c.tau) cfg.hyperparameters.problem_group_threshold = *c.tau;
  if (c.offline) cfg.endpoint.kind = "offline";
  if (c.jobs) cfg.jobs = *c.jobs;
  validate(cfg);
  return cfg;
}

FeatureConfig feature_config(const Config& cfg) { return {cfg.feature_mode, cfg.vectorizer, cfg.hyperparameters}; }

// Writes to --output, or stdout when it is empty or "-".
void emit(const Common& c, const std::string& text) {
  if (c.output.empty() || c.output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(c.output, std::ios::binary);
  if (!out) throw Error("cannot write " + c.output);
  out << text;
}

template <class T>
std::vector<T> parse_list(const std::string& csv, T (*parse)(std::string_view)) {
  std::vector<T> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(parse(item));
  if (out.empty()) throw ValidationError("empty list: '" + csv + "'");
  return out;
}

class SummarizerHolder {
 public:
  explicit SummarizerHolder(const Config& cfg)
      : endpoint_(make_endpoint(cfg.endpoint)), summarizer_(*endpoint_, summarizer_options(cfg)) {}
  Summarizer& get() { return summarizer_; }

 private:
  std::unique_ptr<CompletionEndpoint> endpoint_;
  Summarizer summarizer_;
};

TriageService* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Root-cause triage for database replay failures"};
  app.require_subcommand(1);
  Common c;

  auto common = [&c](CLI::App* s, bool features) {
    s->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
    s->add_option("--output,-o", c.output, "output file (default stdout)");
    s->add_flag("--offline", c.offline, "use the offline summarizer endpoint");
    if (features) {
      s->add_option("--mode", c.mode, "feature mode: em, em_ss, em_ss_summary, em_summary");
      s->add_option("--vectorizer", c.vectorizer, "tfidf or subword_embedding");
      s->add_option("--k", c.k, "neighbors");
      s->add_option("--theta", c.theta, "certainty threshold");
      s->add_option("--tau", c.tau, "problem-group cosine threshold");
      s->add_option("--format", c.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    }
  };

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic replay with ground-truth labels");
  common(gen, false);
  std::string scenario_kind = "overlap", scenario_file, labels_path, dataset_path;
  int classes = 12, overlap_classes = 3, failed_events = 3000;
  gen->add_option("--scenario", scenario_kind, "overlap or plain")->check(CLI::IsMember({"overlap", "plain"}));
  gen->add_option("--scenario-file", scenario_file, "scenario JSON")->check(CLI::ExistingFile);
  gen->add_option("--classes", classes, "classes of the plain scenario")->check(CLI::PositiveNumber);
  gen->add_option("--overlap-classes", overlap_classes, "overlap block size")->check(CLI::NonNegativeNumber);
  gen->add_option("--failed-events", failed_events, "primary failures")->check(CLI::PositiveNumber);
  gen->add_option("--labels", labels_path, "ground-truth labels JSONL");
  gen->add_option("--dataset", dataset_path, "labeled dataset JSONL (summaries attached)");

  // ingest-check
  auto* chk = app.add_subcommand("ingest-check", "validate a replay log and print its statistics");
  common(chk, false);
  std::string replay_path;
  chk->add_option("--replay,replay", replay_path, "replay JSONL")->required()->check(CLI::ExistingFile);
  chk->add_option("--format", c.format, "text or json")->check(CLI::IsMember({"text", "json"}));

  // summarize
  auto* sum = app.add_subcommand("summarize", "summarize the context of failed events");
  common(sum, false);
  std::string event_id;
  sum->add_option("--replay,replay", replay_path, "replay JSONL")->required()->check(CLI::ExistingFile);
  sum->add_option("--event", event_id, "single failed event");
  bool chunked = false;
  sum->add_flag("--chunked", chunked, "split contexts that exceed the token budget");

  // train
  auto* trn = app.add_subcommand("train", "fit a model snapshot on a labeled dataset");
  common(trn, true);
  std::string model_path, version = "v1";
  trn->add_option("--dataset", dataset_path, "labeled dataset JSONL")->required()->check(CLI::ExistingFile);
  trn->add_option("--version", version, "snapshot version");

  // classify
  auto* cls = app.add_subcommand("classify", "predict root causes for every failed event of a replay");
  common(cls, true);
  cls->add_option("--replay,replay", replay_path, "replay JSONL")->required()->check(CLI::ExistingFile);
  auto* model_opt = cls->add_option("--model", model_path, "snapshot JSON")->check(CLI::ExistingFile);
  cls->add_option("--dataset", dataset_path, "train on this dataset instead of loading a snapshot")
      ->excludes(model_opt)
      ->check(CLI::ExistingFile);
  cls->add_option("--version", version, "snapshot version when training from --dataset")->excludes(model_opt);

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "stratified k-fold cross-validation");
  common(evl, true);
  evl->add_option("--dataset", dataset_path, "labeled dataset JSONL")->required()->check(CLI::ExistingFile);
  bool search = false;
  evl->add_flag("--search", search, "hyperparameter search over the config grid");

  // compare
  auto* cmp = app.add_subcommand("compare", "feature mode x vectorizer x distance table");
  common(cmp, true);
  std::string modes = "em_ss,em_ss_summary,em_summary", vectorizers = "tfidf,subword_embedding";
  cmp->add_option("--dataset", dataset_path, "labeled dataset JSONL")->required()->check(CLI::ExistingFile);
  cmp->add_option("--modes", modes, "comma-separated feature modes");
  cmp->add_option("--vectorizers", vectorizers, "comma-separated vectorizers");

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "CSV of text embeddings for the top problem-group classes");
  common(exp, true);
  std::size_t top = 5;
  exp->add_option("--dataset", dataset_path, "labeled dataset JSONL")->required()->check(CLI::ExistingFile);
  exp->add_option("--top", top, "classes to export")->check(CLI::PositiveNumber);

  // serve
  auto* srv = app.add_subcommand("serve", "run the HTTP triage service");
  common(srv, false);
  std::optional<std::string> host, data_dir, seed_dataset;
  std::optional<int> port;
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "port")->check(CLI::Range(0, 65535));
  srv->add_option("--data-dir", data_dir, "journal and model directory");
  srv->add_option("--seed-dataset", seed_dataset, "labeled dataset for the first model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    Config cfg = resolve(c);
    const bool as_json = c.format == "json";

    if (gen->parsed()) {
      SynthScenario sc;
      if (!scenario_file.empty()) {
        std::ifstream in(scenario_file);
        sc = json::parse(in).get<SynthScenario>();
      } else if (scenario_kind == "plain") {
        sc = plain_scenario(cfg.seed, classes, failed_events);
      } else {
        sc = overlap_scenario(cfg.seed, overlap_classes, failed_events);
      }
      if (c.seed) sc.seed = *c.seed;
      const SynthResult r = generate(sc);
      std::ostringstream out;
      write_log(r.log, out);
      emit(c, out.str());
      if (!labels_path.empty()) write_labels(to_label_records(r.truth), labels_path);
      if (!dataset_path.empty()) {
        SummarizerHolder s(cfg);
        write_dataset(build_dataset(r.log, r.truth, &s.get(), cfg.jobs), dataset_path);
      }
    } else if (chk->parsed()) {
      const ReplayLog log = ingest(replay_path);
      std::size_t failed = 0, skipped = 0, succeeded = 0;
      for (const auto& e : log.events) {
        failed += e.status == EventStatus::failed;
        skipped += e.status == EventStatus::skipped;
        succeeded += e.status == EventStatus::succeeded;
      }
      const ContextStats st = context_stats(log);
      if (as_json) {
        emit(c, json{{"replay_id", log.replay_id},
                     {"events", log.events.size()},
                     {"failed", failed},
                     {"skipped", skipped},
                     {"succeeded", succeeded},
                     {"context", {{"min", st.min}, {"mean", st.mean}, {"max", st.max}}}}
                        .dump(2) +
                    "\n");
      } else {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "replay %s: %zu events (%zu failed, %zu skipped, %zu succeeded)\n"
                      "context size per failure: min %zu, mean %.2f, max %zu\n",
                      log.replay_id.c_str(), log.events.size(), failed, skipped, succeeded, st.min, st.mean, st.max);
        emit(c, buf);
      }
    } else if (sum->parsed()) {
      const ReplayLog log = ingest(replay_path);
      SummarizerHolder s(cfg);
      std::vector<ContextSet> contexts;
      if (!event_id.empty()) {
        contexts.push_back(collect(log, event_id));
      } else {
        for (auto& ctx : collect_all(log))
          if (!ctx.items.empty()) contexts.push_back(std::move(ctx));
      }
      std::vector<FailureSummary> out(contexts.size());
      parallel_for(contexts.size(), cfg.jobs, [&](std::size_t i) {
        out[i] = chunked ? s.get().summarize_chunked(contexts[i]) : s.get().summarize(contexts[i]);
      });
      std::string text;
      for (std::size_t i = 0; i < out.size(); ++i) {
        json j = out[i];
        j["event_id"] = contexts[i].target_event_id;
        text += j.dump() + "\n";
      }
      emit(c, text);
    } else if (trn->parsed()) {
      const ModelSnapshot snap = train_snapshot(read_dataset(dataset_path), feature_config(cfg), version);
      if (c.output.empty() || c.output == "-")
        std::cout << snapshot_to_string(snap) << "\n";
      else
        save_snapshot(snap, c.output);
    } else if (cls->parsed()) {
      if (model_path.empty() && dataset_path.empty()) throw ValidationError("classify needs --model or --dataset");
      const ModelSnapshot snap = model_path.empty()
                                     ? train_snapshot(read_dataset(dataset_path), feature_config(cfg), version)
                                     : load_snapshot(model_path);
      const ReplayLog log = ingest(replay_path);
      std::optional<SummarizerHolder> s;
      if (uses_summary(snap.feature_mode)) s.emplace(cfg);
      ClassifyOptions opt;
      opt.jobs = cfg.jobs;
      const ReplayClassification rc = classify_replay(snap, log, s ? &s->get() : nullptr, opt);
      std::ostringstream out;
      write_predictions(rc.predictions, out);
      emit(c, out.str());
    } else if (evl->parsed()) {
      const Dataset data = read_dataset(dataset_path);
      if (search) {
        const SearchResult sr = hyperparameter_search(data, feature_config(cfg), cfg.grid, cfg.seed, cfg.jobs);
        emit(c, as_json ? json{{"best", sr.best}, {"report", sr.report}, {"all", sr.all}}.dump(2) + "\n"
                        : format_cv_report(sr.report));
      } else {
        const CvReport r = cross_validate(data, feature_config(cfg), cfg.seed, cfg.jobs);
        emit(c, as_json ? json(r).dump(2) + "\n" : format_cv_report(r));
      }
    } else if (cmp->parsed()) {
      CompareOptions opt;
      opt.modes = parse_list<FeatureMode>(modes, parse_feature_mode);
      opt.vectorizers = parse_list<VectorizerKind>(vectorizers, parse_vectorizer_kind);
      opt.hyperparameters = cfg.hyperparameters;
      opt.seed = cfg.seed;
      opt.jobs = cfg.jobs;
      const auto rows = compare(read_dataset(dataset_path), opt);
      emit(c, as_json ? json(rows).dump(2) + "\n" : format_compare_table(rows));
    } else if (exp->parsed()) {
      const Dataset data = read_dataset(dataset_path);
      std::ostringstream out;
      export_embeddings(data, feature_config(cfg), top, out);
      emit(c, out.str());
    } else if (srv->parsed()) {
      if (host) cfg.host = *host;
      if (port) cfg.port = *port;
      if (data_dir) cfg.data_dir = *data_dir;
      if (seed_dataset) cfg.seed_dataset = *seed_dataset;
      TriageService service(cfg);
      const int bound = service.bind(cfg.host, cfg.port);
      std::cerr << "listening on " << cfg.host << ":" << bound << std::endl;
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.listen_after_bind();
      g_service = nullptr;
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
