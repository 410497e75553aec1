#pragma once

// HTTP triage service: replay ingest, asynchronous classification and
// retraining jobs, the operator work queue and reports.

#include <memory>
#include <string>

#include "rtriage/config.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

class TriageService {
 public:
  /// Replays the journal in config.data_dir. A null endpoint is built from
  /// config.endpoint. When no model exists yet and config.seed_dataset is set,
  /// the first model is trained from it before the constructor returns.
  explicit TriageService(Config config, std::unique_ptr<CompletionEndpoint> endpoint = nullptr);
  ~TriageService();
  TriageService(const TriageService&) = delete;
  TriageService& operator=(const TriageService&) = delete;

  /// Binds and serves until stop(). port 0 picks a free port.
  void listen(const std::string& host, int port);
  /// Binds and returns the port; serve with listen_after_bind().
  int bind(const std::string& host, int port);
  void listen_after_bind();
  void stop();
  /// Blocks until every submitted job finished.
  void wait_for_jobs();

  /// Canonical dump of replays, predictions, actions and models, for checking
  /// that a restart reproduces the same views.
  std::string state_json() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace rtriage
