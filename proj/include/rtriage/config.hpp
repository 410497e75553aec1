#pragma once

// JSON configuration shared by the service and the command line tool. Every
// key is optional; command-line flags override file values.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "rtriage/core_model.hpp"
#include "rtriage/evaluation.hpp"
#include "rtriage/featurize.hpp"
#include "rtriage/summarizer.hpp"

namespace rtriage {

struct Config {
  Hyperparameters hyperparameters;
  EndpointConfig endpoint;
  FeatureMode feature_mode = FeatureMode::em_ss_summary;
  VectorizerKind vectorizer = VectorizerKind::tfidf;
  HyperparameterGrid grid;
  double max_drop = 0.02;
  std::uint64_t seed = 7;
  int jobs = 1;
  int max_in_flight = 4;

  // service
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "triage-data";
  std::string seed_dataset;  // labeled JSON lines used for the first model
  std::string token_env = "RTRIAGE_TOKEN";
};

/// Throws ParseError for unreadable JSON and ValidationError for bad values.
Config load_config(const std::filesystem::path& path);
Config config_from_json(const nlohmann::json& j);
void validate(const Config& c);

void to_json(nlohmann::json& j, const Config& c);

SummarizerOptions summarizer_options(const Config& c, std::optional<std::filesystem::path> cache_dir = {});

}  // namespace rtriage
