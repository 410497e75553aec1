#include "rtriage/config.hpp"

#include <fstream>

#include "rtriage/error.hpp"

namespace rtriage {

Config config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
  Config c;
  try {
    if (j.contains("hyperparameters")) c.hyperparameters = j.at("hyperparameters").get<Hyperparameters>();
    if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<EndpointConfig>();
    if (j.contains("feature_mode")) c.feature_mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    if (j.contains("vectorizer")) c.vectorizer = parse_vectorizer_kind(j.at("vectorizer").get<std::string>());
    if (j.contains("grid")) c.grid = j.at("grid").get<HyperparameterGrid>();
    c.max_drop = j.value("max_drop", c.max_drop);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.seed_dataset = j.value("seed_dataset", c.seed_dataset);
    c.token_env = j.value("token_env", c.token_env);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("configuration: ") + e.what());
  }
  validate(c);
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(0, path.string() + " is not valid JSON");
  return config_from_json(j);
}

void validate(const Config& c) {
  validate(c.hyperparameters);
  if (c.max_drop < 0) throw ValidationError("max_drop must be non-negative");
  if (c.jobs < 1) throw ValidationError("jobs must be positive");
  if (c.max_in_flight < 1) throw ValidationError("max_in_flight must be positive");
  if (c.port < 0 || c.port > 65535) throw ValidationError("port out of range");
}

void to_json(nlohmann::json& j, const Config& c) {
  j = nlohmann::json{{"hyperparameters", c.hyperparameters},
                     {"endpoint", c.endpoint},
                     {"feature_mode", std::string(to_string(c.feature_mode))},
                     {"vectorizer", std::string(to_string(c.vectorizer))},
                     {"grid", c.grid},
                     {"max_drop", c.max_drop},
                     {"seed", c.seed},
                     {"jobs", c.jobs},
                     {"max_in_flight", c.max_in_flight},
                     {"host", c.host},
                     {"port", c.port},
                     {"data_dir", c.data_dir},
                     {"seed_dataset", c.seed_dataset},
                     {"token_env", c.token_env}};
}

SummarizerOptions summarizer_options(const Config& c, std::optional<std::filesystem::path> cache_dir) {
  SummarizerOptions o;
  o.word_limit = c.hyperparameters.error_word_limit;
  o.token_budget = std::min<std::int64_t>(c.hyperparameters.token_budget, c.endpoint.max_context_tokens);
  o.max_in_flight = c.max_in_flight;
  o.cache_dir = std::move(cache_dir);
  return o;
}

}  // namespace rtriage
