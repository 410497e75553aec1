#include "rtriage/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "rtriage/classifier.hpp"
#include "rtriage/context.hpp"
#include "rtriage/error.hpp"
#include "rtriage/evaluation.hpp"
#include "rtriage/pipeline.hpp"
#include "rtriage/replay_log.hpp"
#include "rtriage/training_store.hpp"

namespace rtriage {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Maps a failed request onto an HTTP status.
struct HttpError : Error {
  HttpError(int status, const std::string& what, json details = nullptr)
      : Error(what), status(status), details(std::move(details)) {}
  int status;
  json details;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw HttpError(400, "request body must be a JSON object");
  return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

struct PredictionRecord {
  std::string replay_id;
  Prediction prediction;
  std::vector<Prediction> history;  // superseded predictions, oldest first
  std::optional<std::string> summary_text;
  std::optional<OperatorAction> operator_action;
};

struct ModelRecord {
  std::string version;
  std::string status;  // active | staged | retired
  int dataset_version = 0;
  json report;
  json gate;
  std::string job_id;
};

struct Job {
  std::string id;
  std::string kind;
  std::string status = "queued";
  std::vector<std::string> history{"queued"};
  std::string error;
  json result = json::object();
};

}  // namespace

struct TriageService::Impl {
  Config cfg;
  std::unique_ptr<CompletionEndpoint> endpoint;
  std::unique_ptr<Summarizer> summarizer;
  std::shared_ptr<Journal> journal;
  std::unique_ptr<TrainingStore> store;
  std::string token;
  httplib::Server server;

  mutable std::shared_mutex mu;
  std::map<std::string, std::shared_ptr<const ReplayLog>> replays;
  std::map<std::string, std::pair<std::string, std::size_t>> event_index;
  std::map<std::string, PredictionRecord> predictions;
  std::vector<ModelRecord> models;
  std::map<std::string, std::shared_ptr<const ModelSnapshot>> snapshots;  // version -> loaded snapshot

  mutable std::mutex active_mu;
  std::shared_ptr<const ModelSnapshot> active;

  std::mutex train_mu;

  std::mutex job_mu;
  std::condition_variable job_cv;
  std::map<std::string, Job> jobs;
  std::vector<std::thread> workers;
  std::size_t running_jobs = 0;
  std::size_t job_counter = 0;

  explicit Impl(Config c, std::unique_ptr<CompletionEndpoint> ep) : cfg(std::move(c)), endpoint(std::move(ep)) {
    validate(cfg);
    if (!endpoint) endpoint = make_endpoint(cfg.endpoint);
    fs::create_directories(data_dir() / "replays");
    fs::create_directories(data_dir() / "models");
    summarizer = std::make_unique<Summarizer>(*endpoint, summarizer_options(cfg, data_dir() / "summaries"));
    journal = std::make_shared<Journal>(data_dir() / "journal.jsonl");
    store = std::make_unique<TrainingStore>(journal);
    if (const char* t = std::getenv(cfg.token_env.c_str())) token = t;
    for (const auto& e : journal->read_all()) apply(e);
    if (models.empty() && !cfg.seed_dataset.empty()) {
      if (store->current().items.empty()) store->seed(read_dataset(cfg.seed_dataset), "seed:" + cfg.seed_dataset);
      train("startup", cfg.feature_mode, cfg.vectorizer, cfg.grid, false);
    }
    routes();
  }

  ~Impl() {
    server.stop();
    std::vector<std::thread> ws;
    {
      std::lock_guard lock(job_mu);
      ws.swap(workers);
    }
    for (auto& t : ws) t.join();
  }

  fs::path data_dir() const { return cfg.data_dir; }

  std::shared_ptr<const ModelSnapshot> active_snapshot() const {
    std::lock_guard lock(active_mu);
    return active;
  }

  // ---- journal ----------------------------------------------------------

  void write(const json& entry) {
    std::unique_lock lock(mu);
    journal->append(entry);
    apply_locked(entry);
  }

  void apply(const json& entry) {
    std::unique_lock lock(mu);
    apply_locked(entry);
  }

  void apply_locked(const json& e) {
    const std::string op = e.at("op").get<std::string>();
    if (op == "replay") {
      auto log = std::make_shared<const ReplayLog>(ingest(data_dir() / e.at("file").get<std::string>()));
      for (std::size_t i = 0; i < log->events.size(); ++i) event_index[log->events[i].event_id] = {log->replay_id, i};
      replays[log->replay_id] = std::move(log);
    } else if (op == "predictions") {
      const auto replay_id = e.at("replay_id").get<std::string>();
      const auto summaries = e.value("summaries", json::object());
      for (const auto& pj : e.at("predictions")) {
        Prediction p = pj.get<Prediction>();
        auto& rec = predictions[p.event_id];
        if (!rec.prediction.event_id.empty()) rec.history.push_back(rec.prediction);
        rec.replay_id = replay_id;
        rec.summary_text.reset();
        if (auto s = summaries.find(p.event_id); s != summaries.end()) rec.summary_text = s->get<std::string>();
        rec.prediction = std::move(p);
      }
    } else if (op == "action") {
      const OperatorAction a = e.at("action").get<OperatorAction>();
      if (a.kind == ActionKind::rate_replay) return;
      auto it = predictions.find(a.event_id);
      if (it == predictions.end()) return;
      auto& cur = it->second.operator_action;
      if (!cur || cur->timestamp <= a.timestamp) cur = a;
    } else if (op == "model") {
      ModelRecord m;
      m.version = e.at("version").get<std::string>();
      m.status = e.at("status").get<std::string>();
      m.dataset_version = e.at("dataset_version").get<int>();
      m.report = e.at("report");
      m.gate = e.at("gate");
      m.job_id = e.value("job_id", std::string());
      models.push_back(std::move(m));
    } else if (op == "activate") {
      const auto version = e.at("version").get<std::string>();
      for (auto& m : models) {
        if (m.status == "active") m.status = "retired";
        if (m.version == version) m.status = "active";
      }
      auto snap = load_locked(version);
      std::lock_guard lock(active_mu);
      active = std::move(snap);
    }
  }

  std::shared_ptr<const ModelSnapshot> load_locked(const std::string& version) {
    if (auto it = snapshots.find(version); it != snapshots.end()) return it->second;
    auto snap = std::make_shared<const ModelSnapshot>(load_snapshot(data_dir() / "models" / (version + ".json")));
    snapshots[version] = snap;
    return snap;
  }

  // Snapshot trained on the same data as `base` but with another feature
  // mode; its version is "<base>:<mode>".
  std::shared_ptr<const ModelSnapshot> snapshot_for(const std::shared_ptr<const ModelSnapshot>& base,
                                                    FeatureMode mode) {
    if (base->feature_mode == mode) return base;
    const std::string version = base->version + ":" + std::string(to_string(mode));
    {
      std::shared_lock lock(mu);
      if (auto it = snapshots.find(version); it != snapshots.end()) return it->second;
    }
    int dataset_version = 0;
    {
      std::shared_lock lock(mu);
      for (const auto& m : models)
        if (m.version == base->version) dataset_version = m.dataset_version;
    }
    const auto versions = store->versions();
    if (dataset_version < 1 || dataset_version > static_cast<int>(versions.size()))
      throw PreconditionError("training data of model " + base->version + " is unavailable");
    FeatureConfig fc{mode, base->vectorizer.kind, base->hyperparameters};
    auto snap = std::make_shared<const ModelSnapshot>(
        train_snapshot(versions[static_cast<std::size_t>(dataset_version - 1)].items, fc, version, base->labels));
    std::unique_lock lock(mu);
    return snapshots.emplace(version, snap).first->second;
  }

  std::shared_ptr<const ModelSnapshot> snapshot_by_version(const std::string& version) {
    {
      std::unique_lock lock(mu);
      for (const auto& m : models)
        if (m.version == version) return load_locked(version);
      if (auto it = snapshots.find(version); it != snapshots.end()) return it->second;
    }
    const auto colon = version.find(':');
    if (colon == std::string::npos) throw NotFoundError("unknown model version " + version);
    return snapshot_for(snapshot_by_version(version.substr(0, colon)), parse_feature_mode(version.substr(colon + 1)));
  }

  // ---- jobs -------------------------------------------------------------

  std::string submit(const std::string& kind, std::function<json(const std::string&)> work) {
    std::lock_guard lock(job_mu);
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06zu", ++job_counter);
    const std::string id = buf;
    Job job;
    job.id = id;
    job.kind = kind;
    jobs[id] = std::move(job);
    ++running_jobs;
    workers.emplace_back([this, id, work = std::move(work)] {
      set_job(id, "running");
      try {
        json result = work(id);
        std::lock_guard l(job_mu);
        jobs[id].result = std::move(result);
      } catch (const std::exception& ex) {
        std::lock_guard l(job_mu);
        jobs[id].error = ex.what();
      }
      {
        std::lock_guard l(job_mu);
        set_job_locked(id, jobs[id].error.empty() ? "done" : "failed");
        --running_jobs;
      }
      job_cv.notify_all();
    });
    return id;
  }

  void set_job(const std::string& id, const std::string& status) {
    std::lock_guard lock(job_mu);
    set_job_locked(id, status);
  }

  void set_job_locked(const std::string& id, const std::string& status) {
    auto& j = jobs[id];
    j.status = status;
    j.history.push_back(status);
  }

  void wait_for_jobs() {
    std::unique_lock lock(job_mu);
    job_cv.wait(lock, [&] { return running_jobs == 0; });
  }

  json classify_job(const std::string& job_id, std::shared_ptr<const ModelSnapshot> base,
                    std::shared_ptr<const ReplayLog> log, FeatureMode mode) {
    const auto snap = snapshot_for(base, mode);
    ClassifyOptions opt;
    opt.jobs = cfg.jobs;
    ReplayClassification rc = classify_replay(*snap, *log, uses_summary(mode) ? summarizer.get() : nullptr, opt);
    json summaries = json::object();
    for (const auto& [id, text] : rc.summaries) summaries[id] = text;
    write({{"op", "predictions"},
           {"replay_id", log->replay_id},
           {"job_id", job_id},
           {"feature_mode", std::string(to_string(mode))},
           {"predictions", rc.predictions},
           {"summaries", summaries}});
    std::size_t flagged = 0;
    for (const auto& p : rc.predictions) flagged += p.flagged;
    return {{"replay_id", log->replay_id},
            {"model_version", snap->version},
            {"predictions", rc.predictions.size()},
            {"flagged", flagged}};
  }

  // Harvest (optionally), assemble, search, gate, and activate on pass.
  json train(const std::string& job_id, FeatureMode mode, VectorizerKind vk, const HyperparameterGrid& grid,
             bool harvest_labels) {
    std::lock_guard training(train_mu);
    TrainingDataset ds;
    if (harvest_labels) {
      std::vector<HarvestInput> inputs;
      {
        std::shared_lock lock(mu);
        for (const auto& [event_id, rec] : predictions) {
          const auto& [replay_id, idx] = event_index.at(event_id);
          inputs.push_back({replays.at(replay_id)->events[idx], rec.prediction, rec.summary_text});
        }
      }
      const auto& hp = cfg.hyperparameters;
      ds = store->assemble_new(harvest(inputs, store->actions(), hp.certainty_threshold, hp.per_class_replay_cap),
                               "harvest:" + job_id);
    } else {
      ds = store->current();
    }
    if (ds.items.empty()) throw PreconditionError("training dataset is empty");

    FeatureConfig fc{mode, vk, cfg.hyperparameters};
    const SearchResult sr = hyperparameter_search(ds.items, fc, grid, cfg.seed, cfg.jobs);
    GateDecision gate;
    std::optional<CvReport> previous;
    {
      std::shared_lock lock(mu);
      for (const auto& m : models)
        if (m.status == "active") previous = m.report.get<CvReport>();
    }
    if (previous) gate = regression_gate(sr.report, *previous, cfg.max_drop);

    std::string version;
    {
      std::shared_lock lock(mu);
      version = "v" + std::to_string(models.size() + 1);
    }
    fc.hyperparameters = sr.best;
    const ModelSnapshot snap = train_snapshot(ds.items, fc, version);
    save_snapshot(snap, data_dir() / "models" / (version + ".json"));
    write({{"op", "model"},
           {"version", version},
           {"status", "staged"},
           {"dataset_version", ds.version},
           {"report", sr.report},
           {"gate", gate},
           {"job_id", job_id}});
    if (gate.pass) write({{"op", "activate"}, {"version", version}});
    return {{"version", version},
            {"activated", gate.pass},
            {"gate", gate},
            {"dataset_version", ds.version},
            {"dataset_size", ds.items.size()},
            {"mean_f1_macro", sr.report.mean_f1_macro}};
  }

  // ---- views ------------------------------------------------------------

  json prediction_view(const PredictionRecord& rec, bool with_history) const {
    json j = rec.prediction;
    j["replay_id"] = rec.replay_id;
    std::string effective = rec.prediction.label_id;
    if (rec.operator_action) {
      const auto& a = *rec.operator_action;
      if (a.kind == ActionKind::reclassify) effective = a.label_id;
      j["operator_action"] = a;
      j["operator_label"] = effective;
    }
    j["effective_label"] = effective;
    if (rec.summary_text) j["summary_text"] = *rec.summary_text;
    if (with_history) j["history"] = rec.history;
    return j;
  }

  std::set<std::string> label_registry() const {
    std::set<std::string> out;
    if (auto a = active_snapshot())
      for (const auto& l : a->labels) out.insert(l.label_id);
    for (const auto& le : store->current().items) out.insert(le.label.label_id);
    return out;
  }

  const ReplayEvent& event_locked(const std::string& event_id) const {
    auto it = event_index.find(event_id);
    if (it == event_index.end()) throw NotFoundError("unknown event " + event_id);
    return replays.at(it->second.first)->events[it->second.second];
  }

  // ---- routes -----------------------------------------------------------

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guard(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const HttpError& e) {
        json body{{"error", e.what()}};
        if (!e.details.is_null()) body["details"] = e.details;
        send_json(res, e.status, body);
      } catch (const ParseError& e) {
        send_json(res, 400, {{"error", e.what()}, {"line", e.line()}});
      } catch (const ValidationError& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const NotFoundError& e) {
        send_json(res, 404, {{"error", e.what()}});
      } catch (const PreconditionError& e) {
        send_json(res, 409, {{"error", e.what()}});
      } catch (const EndpointError& e) {
        send_json(res, 502, {{"error", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  }

  void routes() {
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (token.empty() || req.path == "/healthz") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + token)
        return httplib::Server::HandlerResponse::Unhandled;
      send_json(res, 401, {{"error", "missing or invalid bearer token"}});
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

    server.Post("/replays", guard([this](const httplib::Request& req, httplib::Response& res) {
      std::string body = req.body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("file")) throw HttpError(400, "multipart upload needs a 'file' part");
        body = req.get_file_value("file").content;
      }
      std::istringstream in(body);
      ReplayLog log;
      try {
        log = parse_log(in, "upload");
      } catch (const ParseError& e) {
        throw HttpError(400, e.what(), {{"line", e.line()}});
      } catch (const ValidationError& e) {
        throw HttpError(400, e.what());
      }
      if (log.events.empty()) throw HttpError(400, "upload contains no events");
      const std::string file = "replays/" + hash_to_hex(fnv1a64(log.replay_id)) + ".jsonl";
      std::unique_lock lock(mu);
      if (replays.count(log.replay_id)) throw HttpError(409, "replay " + log.replay_id + " already exists");
      for (const auto& e : log.events)
        if (event_index.count(e.event_id)) throw HttpError(409, "event " + e.event_id + " already exists");
      export_log(log, data_dir() / file);
      const json entry{{"op", "replay"}, {"replay_id", log.replay_id}, {"file", file}};
      journal->append(entry);
      apply_locked(entry);
      send_json(res, 201, {{"replay_id", log.replay_id}, {"event_count", log.events.size()}});
    }));

    server.Post("/replays/:id/classify", guard([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      std::shared_ptr<const ReplayLog> log;
      {
        std::shared_lock lock(mu);
        auto it = replays.find(id);
        if (it == replays.end()) throw NotFoundError("unknown replay " + id);
        log = it->second;
      }
      auto snap = active_snapshot();
      if (!snap) throw HttpError(503, "no active model");
      const FeatureMode mode =
          req.has_param("feature_mode") ? parse_feature_mode(req.get_param_value("feature_mode")) : snap->feature_mode;
      const std::string job = submit("classify", [this, snap, log, mode](const std::string& job_id) {
        return classify_job(job_id, snap, log, mode);
      });
      send_json(res, 202, {{"job_id", job}, {"model_version", snap->version}});
    }));

    server.Get("/jobs/:id", guard([this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(job_mu);
      auto it = jobs.find(req.path_params.at("id"));
      if (it == jobs.end()) throw NotFoundError("unknown job");
      const Job& j = it->second;
      json body{{"job_id", j.id}, {"kind", j.kind}, {"status", j.status}, {"history", j.history}, {"result", j.result}};
      if (!j.error.empty()) body["error"] = j.error;
      send_json(res, 200, body);
    }));

    server.Get("/predictions", guard([this](const httplib::Request& req, httplib::Response& res) {
      auto param = [&](const char* k) -> std::optional<std::string> {
        if (!req.has_param(k)) return std::nullopt;
        return req.get_param_value(k);
      };
      const auto replay = param("replay_id"), flagged = param("flagged"), reason = param("flag_reason"),
                 label = param("label");
      if (flagged && *flagged != "true" && *flagged != "false") throw HttpError(400, "flagged must be true or false");
      if (reason) parse_flag_reason(*reason);
      const long offset = param("offset") ? std::stol(*param("offset")) : 0;
      const long limit = param("limit") ? std::stol(*param("limit")) : 50;
      if (offset < 0 || limit < 1 || limit > 1000) throw HttpError(400, "offset must be >= 0 and limit in 1..1000");

      std::shared_lock lock(mu);
      std::vector<const PredictionRecord*> rows;
      for (const auto& [id, rec] : predictions) {
        const auto& p = rec.prediction;
        if (replay && rec.replay_id != *replay) continue;
        if (flagged && p.flagged != (*flagged == "true")) continue;
        if (reason && (!p.flag_reason || to_string(*p.flag_reason) != *reason)) continue;
        if (label) {
          std::string eff = p.label_id;
          if (rec.operator_action && rec.operator_action->kind == ActionKind::reclassify)
            eff = rec.operator_action->label_id;
          if (eff != *label) continue;
        }
        rows.push_back(&rec);
      }
      std::sort(rows.begin(), rows.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
        if (a->prediction.certainty != b->prediction.certainty) return a->prediction.certainty < b->prediction.certainty;
        return a->prediction.event_id < b->prediction.event_id;
      });
      json items = json::array();
      for (std::size_t i = static_cast<std::size_t>(offset); i < rows.size() && items.size() < static_cast<std::size_t>(limit); ++i)
        items.push_back(prediction_view(*rows[i], false));
      send_json(res, 200, {{"total", rows.size()}, {"offset", offset}, {"limit", limit}, {"items", items}});
    }));

    server.Get("/predictions/:id", guard([this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu);
      auto it = predictions.find(req.path_params.at("id"));
      if (it == predictions.end()) throw NotFoundError("no prediction for event " + req.path_params.at("id"));
      send_json(res, 200, prediction_view(it->second, true));
    }));

    server.Get("/predictions/:id/explain", guard([this](const httplib::Request& req, httplib::Response& res) {
      Prediction p;
      {
        std::shared_lock lock(mu);
        auto it = predictions.find(req.path_params.at("id"));
        if (it == predictions.end()) throw NotFoundError("no prediction for event " + req.path_params.at("id"));
        p = it->second.prediction;
      }
      send_json(res, 200, explain(*snapshot_by_version(p.model_version), p));
    }));

    auto label_action = [this](ActionKind kind) {
      return guard([this, kind](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.path_params.at("id");
        const json body = parse_body(req);
        OperatorAction a;
        a.kind = kind;
        a.event_id = id;
        a.operator_id = body.value("operator_id", std::string("operator"));
        a.timestamp = body.value("timestamp", utc_now());
        if (kind == ActionKind::reclassify) {
          a.label_id = body.value("label_id", std::string());
          if (a.label_id.empty()) throw HttpError(422, "label_id is required");
          if (!label_registry().count(a.label_id)) throw HttpError(422, "unknown label " + a.label_id);
        }
        try {
          validate_action(a);
        } catch (const ValidationError& e) {
          throw HttpError(422, e.what());
        }
        std::unique_lock lock(mu);
        auto it = predictions.find(id);
        if (it == predictions.end()) throw NotFoundError("no prediction for event " + id);
        store->record_action(a);
        apply_locked({{"op", "action"}, {"action", a}});
        send_json(res, 200, prediction_view(it->second, true));
      });
    };
    server.Post("/predictions/:id/reclassify", label_action(ActionKind::reclassify));
    server.Post("/predictions/:id/confirm", label_action(ActionKind::confirm));

    server.Post("/replays/:id/rating", guard([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.path_params.at("id");
      const json body = parse_body(req);
      OperatorAction a;
      a.kind = ActionKind::rate_replay;
      a.replay_id = id;
      if (!body.contains("rating") || !body.at("rating").is_number_integer())
        throw HttpError(422, "rating must be an integer in 1..4");
      a.rating = body.at("rating").get<int>();
      a.operator_id = body.value("operator_id", std::string("operator"));
      a.timestamp = body.value("timestamp", utc_now());
      try {
        validate_action(a);
      } catch (const ValidationError& e) {
        throw HttpError(422, e.what());
      }
      {
        std::shared_lock lock(mu);
        if (!replays.count(id)) throw NotFoundError("unknown replay " + id);
      }
      store->record_action(a);
      send_json(res, 200, a);
    }));

    server.Get("/reports/ratings/weekly", guard([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"weeks", weekly_rating_report(store->actions())}});
    }));

    server.Post("/train", guard([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const HyperparameterGrid grid = body.contains("grid") ? body.at("grid").get<HyperparameterGrid>() : cfg.grid;
      const FeatureMode mode = body.contains("feature_mode")
                                   ? parse_feature_mode(body.at("feature_mode").get<std::string>())
                                   : cfg.feature_mode;
      const VectorizerKind vk = body.contains("vectorizer")
                                    ? parse_vectorizer_kind(body.at("vectorizer").get<std::string>())
                                    : cfg.vectorizer;
      bool empty;
      {
        std::shared_lock lock(mu);
        empty = predictions.empty() && store->current().items.empty();
      }
      if (empty) throw HttpError(409, "no training data: nothing labeled and nothing classified");
      const std::string job = submit("train", [this, mode, vk, grid](const std::string& job_id) {
        return train(job_id, mode, vk, grid, true);
      });
      send_json(res, 202, {{"job_id", job}});
    }));

    server.Get("/models", guard([this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu);
      json out = json::array();
      for (const auto& m : models)
        out.push_back({{"version", m.version},
                       {"status", m.status},
                       {"dataset_version", m.dataset_version},
                       {"feature_mode", m.report.at("feature_mode")},
                       {"vectorizer", m.report.at("vectorizer")},
                       {"mean_f1_macro", m.report.at("mean_f1_macro")},
                       {"gate", m.gate},
                       {"job_id", m.job_id}});
      send_json(res, 200, {{"models", out}});
    }));

    server.Get("/models/active/report", guard([this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu);
      for (const auto& m : models)
        if (m.status == "active") {
          send_json(res, 200, {{"version", m.version}, {"report", m.report}, {"gate", m.gate}});
          return;
        }
      throw NotFoundError("no active model");
    }));

    server.Get("/labels", guard([this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& l : label_registry()) out.push_back({{"label_id", l}, {"display_name", l}});
      send_json(res, 200, {{"labels", out}});
    }));

    auto context_of = [this](const std::string& id) {
      std::shared_lock lock(mu);
      const ReplayEvent& e = event_locked(id);
      if (e.status != EventStatus::failed) throw PreconditionError("event " + id + " did not fail");
      return collect(*replays.at(e.replay_id), id);
    };

    server.Get("/events/:id/context", guard([context_of](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, context_of(req.path_params.at("id")));
    }));

    server.Get("/events/:id/summary", guard([this, context_of](const httplib::Request& req, httplib::Response& res) {
      const ContextSet ctx = context_of(req.path_params.at("id"));
      if (ctx.items.empty()) {
        res.set_header("X-Served-From-Cache", "false");
        send_json(res, 200, {{"groups", json::array()}, {"text", ""}});
        return;
      }
      const bool hit = summarizer->cached(ctx);
      const FailureSummary s = summarizer->summarize(ctx);
      res.set_header("X-Served-From-Cache", hit ? "true" : "false");
      json body = s;
      body["text"] = summary_to_text(s);
      send_json(res, 200, body);
    }));
  }

  json state() const {
    std::shared_lock lock(mu);
    json reps = json::array();
    for (const auto& [id, log] : replays) reps.push_back({{"replay_id", id}, {"events", log->events.size()}});
    json preds = json::array();
    for (const auto& [id, rec] : predictions) preds.push_back(prediction_view(rec, true));
    json ms = json::array();
    for (const auto& m : models)
      ms.push_back({{"version", m.version}, {"status", m.status}, {"dataset_version", m.dataset_version},
                    {"report", m.report}, {"gate", m.gate}});
    auto a = active_snapshot();
    return {{"replays", reps},
            {"predictions", preds},
            {"models", ms},
            {"active", a ? a->version : ""},
            {"store", json::parse(store->state_json())}};
  }
};

TriageService::TriageService(Config config, std::unique_ptr<CompletionEndpoint> endpoint)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(endpoint))) {}

TriageService::~TriageService() = default;

void TriageService::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

int TriageService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void TriageService::listen_after_bind() { impl_->server.listen_after_bind(); }

void TriageService::stop() { impl_->server.stop(); }

void TriageService::wait_for_jobs() { impl_->wait_for_jobs(); }

std::string TriageService::state_json() const { return impl_->state().dump(); }

}  // namespace rtriage
